import itertools

import numpy as np
import pytest

from errors import EvaluationError, ShapeError
from metrics import (
    EPS, MetricRecord, distance_transform, dice_iou, e_measure, evaluate_dir, evaluate_pair,
    gaussian_kernel, mae, quadrant_split, s_measure, weighted_fmeasure,
)
from tensor_io import write_image


def square_gt(size=8, lo=2, hi=6):
    gt = np.zeros((size, size))
    gt[lo:hi, lo:hi] = 1.0
    return gt


def binary_grids(size=3):
    for bits in itertools.product((0.0, 1.0), repeat=size * size):
        yield np.array(bits).reshape(size, size)


def _column_gt():
    gt = np.zeros((3, 3))
    gt[:, 1] = 1.0
    return gt


def _corner_gt():
    gt = np.zeros((3, 3))
    gt[0, 0] = 1.0
    return gt


# every background pixel of these has a unique nearest foreground pixel
THREE_BY_THREE_GTS = (_column_gt(), _corner_gt())


# --- literal oracles -------------------------------------------------------

def brute_distance(fg):
    points = np.argwhere(fg)
    h, w = fg.shape
    dist = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            dist[i, j] = np.sqrt(((points - [i, j]) ** 2).sum(axis=1)).min()
    return dist


def nearest_foreground_error(error, g):
    """Error of the closest foreground pixel, for grids where that pixel is unique"""
    points = np.argwhere(g)
    out = error.copy()
    h, w = g.shape
    for i in range(h):
        for j in range(w):
            if not g[i, j]:
                d = ((points - [i, j]) ** 2).sum(axis=1)
                y, x = points[int(np.argmin(d))]
                out[i, j] = error[y, x]
    return out


def fmeasure_oracle(pred, gt):
    """Weighted F-measure written out pixel by pixel"""
    g = gt > 0.5
    h, w = g.shape
    error = np.abs(pred - g)
    dependent = nearest_foreground_error(error, g)
    kernel = gaussian_kernel()
    half = kernel.shape[0] // 2
    smoothed = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            for dy in range(-half, half + 1):
                for dx in range(-half, half + 1):
                    y = min(max(i + dy, 0), h - 1)
                    x = min(max(j + dx, 0), w - 1)
                    smoothed[i, j] += kernel[dy + half, dx + half] * dependent[y, x]
    dist = brute_distance(g)
    tp = fp = fg_sum = 0.0
    for i in range(h):
        for j in range(w):
            e = error[i, j]
            if g[i, j]:
                e = min(e, smoothed[i, j])
                fg_sum += e
                tp += 1.0 - e
            else:
                fp += e * (2.0 - np.exp(np.log(0.5) / 5.0 * dist[i, j]))
    recall = 1.0 - fg_sum / g.sum()
    precision = tp / (tp + fp + EPS)
    return 2.0 * recall * precision / (recall + precision + EPS)


def ssim_oracle(p, g):
    n = p.size
    x, y = p.mean(), g.mean()
    if n > 1:
        sx = ((p - x) ** 2).sum() / (n - 1)
        sy = ((g - y) ** 2).sum() / (n - 1)
        sxy = ((p - x) * (g - y)).sum() / (n - 1)
    else:
        sx = sy = sxy = 0.0
    a = 4 * x * y * sxy
    b = (x ** 2 + y ** 2) * (sx + sy)
    if a != 0:
        return a / (b + EPS)
    return 1.0 if b == 0 else 0.0


def s_measure_oracle(p, g):
    g = g.astype(bool)

    def similarity(values):
        mean = values.mean()
        sigma = values.std(ddof=1) if values.size > 1 else 0.0
        return 2 * mean / (mean ** 2 + 1 + sigma + EPS)

    u = g.mean()
    objects = u * similarity(p[g]) + (1 - u) * similarity(1 - p[~g])
    rows, cols = np.nonzero(g)
    y = int(np.round(rows.mean())) + 1
    x = int(np.round(cols.mean())) + 1
    h, w = g.shape
    regions = 0.0
    for block in (np.s_[:y, :x], np.s_[:y, x:], np.s_[y:, :x], np.s_[y:, x:]):
        bp, bg = p[block], g[block].astype(float)
        if bp.size:
            regions += bp.size / (h * w) * ssim_oracle(bp, bg)
    return max(0.0, 0.5 * objects + 0.5 * regions)


def e_measure_oracle(p, g):
    threshold = min(2 * p.mean(), 1.0)
    fm = (p >= threshold).astype(float) if threshold > 0 else np.zeros_like(p)
    gm = g.astype(float)
    if gm.sum() == 0:
        enhanced = 1 - fm
    elif gm.sum() == gm.size:
        enhanced = fm
    else:
        a = fm - fm.mean()
        b = gm - gm.mean()
        enhanced = ((2 * a * b / (a ** 2 + b ** 2 + EPS)) + 1) ** 2 / 4
    return enhanced.sum() / gm.size


def counts_oracle(p, g):
    tp = fp = fn = 0
    for a, b in zip(p.ravel(), g.ravel()):
        tp += a >= 0.5 and b > 0.5
        fp += a >= 0.5 and b <= 0.5
        fn += a < 0.5 and b > 0.5
    return tp, fp, fn


def dice_oracle(p, g):
    tp, fp, fn = counts_oracle(p, g)
    return 1.0 if tp + fp + fn == 0 else 2 * tp / (2 * tp + fp + fn)


def iou_oracle(p, g):
    tp, fp, fn = counts_oracle(p, g)
    return 1.0 if tp + fp + fn == 0 else tp / (tp + fp + fn)


def mae_oracle(p, g):
    return sum(abs(a - b) for a, b in zip(p.ravel(), g.ravel())) / p.size


# --- simple measures -------------------------------------------------------

def test_mae_examples():
    gt = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert mae(gt, gt) == 0.0
    assert mae(1 - gt, gt) == 1.0
    assert mae(np.array([[0.2, 0.8], [0.5, 0.0]]), gt) == pytest.approx(0.225)


def test_dice_iou_examples():
    gt = square_gt()
    assert dice_iou(gt, gt) == (1.0, 1.0)
    assert dice_iou(1 - gt, gt) == (0.0, 0.0)
    dic, iou = dice_iou(np.array([[1.0, 1.0], [0.0, 0.0]]), np.array([[1.0, 0.0], [1.0, 0.0]]))
    assert dic == pytest.approx(0.5)
    assert iou == pytest.approx(1 / 3)
    assert dice_iou(np.zeros((3, 3)), np.zeros((3, 3))) == (1.0, 1.0)


def test_dice_is_never_below_iou(rng):
    for _ in range(25):
        pred = rng.random((6, 6))
        gt = (rng.random((6, 6)) > 0.6).astype(float)
        dic, iou = dice_iou(pred, gt)
        assert dic >= iou - 1e-12


def test_measures_reject_mismatched_grids():
    with pytest.raises(ShapeError):
        mae(np.zeros((3, 3)), np.zeros((3, 4)))


# --- weighted F-measure ----------------------------------------------------

def test_distance_transform_matches_brute_force(rng):
    fg = rng.random((9, 11)) > 0.85
    fg[4, 5] = True
    dist, (rows, cols) = distance_transform(fg)
    np.testing.assert_allclose(dist, brute_distance(fg), atol=1e-12)
    assert fg[rows, cols].all()
    np.testing.assert_allclose(np.hypot(rows - np.arange(9)[:, None], cols - np.arange(11)), dist)


def test_gaussian_kernel_is_normalized():
    kernel = gaussian_kernel()
    assert kernel.shape == (7, 7)
    assert kernel.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(kernel, kernel.T)


def test_weighted_fmeasure_extremes():
    gt = square_gt()
    assert weighted_fmeasure(gt, gt) == pytest.approx(1.0, abs=1e-6)
    assert weighted_fmeasure(1 - gt, gt) == pytest.approx(0.0, abs=1e-6)
    assert weighted_fmeasure(np.zeros((4, 4)), np.zeros((4, 4))) == 1.0
    assert weighted_fmeasure(np.full((4, 4), 0.1), np.zeros((4, 4))) == 0.0


def test_weighted_fmeasure_dilated_blob_matches_oracle():
    gt = square_gt()
    pred = square_gt(lo=1, hi=7)
    assert weighted_fmeasure(pred, gt) == pytest.approx(fmeasure_oracle(pred, gt), rel=1e-9)


def test_weighted_fmeasure_soft_prediction_matches_oracle():
    gt = square_gt()
    pred = 0.7 * gt
    pred[1, 1:7] = 0.2
    pred[7, 0] = 0.9
    assert weighted_fmeasure(pred, gt) == pytest.approx(fmeasure_oracle(pred, gt), rel=1e-9)


def test_weighted_fmeasure_is_rotation_invariant():
    gt = square_gt()
    pred = 0.7 * gt
    pred[1, 3] = 0.3
    score = weighted_fmeasure(pred, gt)
    for k in (1, 2, 3):
        assert weighted_fmeasure(np.rot90(pred, k), np.rot90(gt, k)) == pytest.approx(score, rel=1e-9)
    assert weighted_fmeasure(pred.T, gt.T) == pytest.approx(score, rel=1e-9)


# --- S-measure -------------------------------------------------------------

def test_s_measure_examples():
    gt = square_gt()
    assert s_measure(gt, gt) == pytest.approx(1.0, abs=1e-6)
    assert s_measure(np.zeros((5, 5)), np.zeros((5, 5))) == 1.0
    assert s_measure(np.full((5, 5), 0.25), np.zeros((5, 5))) == pytest.approx(0.75)
    assert s_measure(np.full((5, 5), 0.25), np.ones((5, 5))) == pytest.approx(0.25)


def test_quadrant_split_rounds_the_centroid():
    # rows 2..5 average 3.5, which rounds half to even
    assert quadrant_split(square_gt().astype(bool)) == (5, 5)
    g = np.zeros((5, 5), bool)
    g[:, 2] = True
    assert quadrant_split(g) == (3, 3)
    corner = np.zeros((3, 3), bool)
    corner[0, 0] = corner[1, 0] = corner[1, 1] = True
    # centroid (2/3, 1/3): rounding moves the row cut past row 1, flooring would not
    assert quadrant_split(corner) == (2, 1)


@pytest.mark.parametrize("gt", THREE_BY_THREE_GTS, ids=["column", "corner"])
def test_s_measure_exhaustive_three_by_three(gt):
    for pred in binary_grids():
        assert s_measure(pred, gt) == pytest.approx(s_measure_oracle(pred, gt), abs=1e-12), pred


def test_s_measure_soft_fixture_matches_oracle(rng):
    gt = square_gt()
    gt[2, 2] = 0.0
    pred = rng.random((8, 8))
    assert s_measure(pred, gt) == pytest.approx(s_measure_oracle(pred, gt), abs=1e-12)


# --- E-measure -------------------------------------------------------------

def test_e_measure_examples():
    gt = square_gt()
    assert e_measure(gt, gt) == pytest.approx(1.0, abs=1e-6)
    assert e_measure(1 - gt, gt) == pytest.approx(0.0, abs=1e-6)
    assert e_measure(np.zeros((4, 4)), np.zeros((4, 4))) == 1.0
    assert e_measure(np.zeros((4, 4)), np.ones((4, 4))) == 0.0


def test_e_measure_matches_oracle(rng):
    gt = square_gt()
    for _ in range(10):
        pred = rng.random((8, 8)) * rng.random()
        assert e_measure(pred, gt) == pytest.approx(e_measure_oracle(pred, gt), abs=1e-12)


# --- measures stay in range ------------------------------------------------

def test_all_measures_lie_in_unit_interval(rng):
    for _ in range(10):
        pred = rng.random((8, 8))
        gt = (rng.random((8, 8)) > 0.5).astype(float)
        record = evaluate_pair("x", pred, gt)
        for value in (record.dic, record.iou, record.fwb, record.sm, record.em, record.mae):
            assert 0.0 <= value <= 1.0 + 1e-9


@pytest.mark.parametrize("gt", THREE_BY_THREE_GTS, ids=["column", "corner"])
def test_measures_exhaustive_three_by_three(gt):
    for pred in binary_grids():
        dic, iou = dice_iou(pred, gt)
        assert dic == pytest.approx(dice_oracle(pred, gt), abs=1e-12), pred
        assert iou == pytest.approx(iou_oracle(pred, gt), abs=1e-12), pred
        assert mae(pred, gt) == pytest.approx(mae_oracle(pred, gt), abs=1e-12), pred
        assert weighted_fmeasure(pred, gt) == pytest.approx(fmeasure_oracle(pred, gt), abs=1e-9), pred
        assert e_measure(pred, gt) == pytest.approx(e_measure_oracle(pred, gt), abs=1e-12), pred


def _scores(pred, gt):
    record = evaluate_pair("x", pred, gt)
    return {name: getattr(record, name) for name in ("dic", "iou", "fwb", "sm", "em", "mae")}


def test_measures_are_rotation_invariant(rng):
    gt = square_gt()
    pred = rng.random((8, 8))
    base = _scores(pred, gt)
    for k in (1, 2, 3):
        turned = _scores(np.rot90(pred, k), np.rot90(gt, k))
        # the S-measure cut sits after the rounded centroid, so only transposition preserves it
        for name in ("dic", "iou", "fwb", "em", "mae"):
            assert turned[name] == pytest.approx(base[name], rel=1e-9, abs=1e-12), (name, k)
    flipped = _scores(pred.T, gt.T)
    for name, value in base.items():
        assert flipped[name] == pytest.approx(value, rel=1e-9, abs=1e-12), name


def test_mae_of_complement_adds_to_one(rng):
    gt = (rng.random((7, 9)) > 0.5).astype(float)
    for _ in range(5):
        pred = rng.random((7, 9))
        assert mae(pred, gt) + mae(1.0 - pred, gt) == pytest.approx(1.0)
    binary = (rng.random((7, 9)) > 0.5).astype(float)
    assert mae(binary, gt) + mae(1.0 - binary, gt) == pytest.approx(1.0)


@pytest.mark.parametrize("gt", THREE_BY_THREE_GTS, ids=["column", "corner"])
def test_clearing_a_false_positive_never_hurts(gt):
    background = np.argwhere(gt < 0.5)
    for pred in binary_grids():
        before = _scores(pred, gt)
        for y, x in background:
            if pred[y, x] != 1.0:
                continue
            cleared = pred.copy()
            cleared[y, x] = 0.0
            after = _scores(cleared, gt)
            for name in ("dic", "iou", "fwb"):
                assert after[name] >= before[name] - 1e-12, (name, pred, (y, x))
            assert after["mae"] <= before["mae"] + 1e-12


def test_single_row_and_single_pixel_grids():
    pred = np.array([[0.2, 0.8, 0.9, 0.1]])
    gt = np.array([[0.0, 1.0, 1.0, 0.0]])
    assert mae(pred, gt) == pytest.approx(0.15)
    assert dice_iou(pred, gt) == (1.0, 1.0)
    assert mae(pred.T, gt.T) == pytest.approx(0.15)
    record = evaluate_pair("row", pred, gt)
    assert 0.0 <= record.sm <= 1.0 and 0.0 <= record.em <= 1.0 and 0.0 <= record.fwb <= 1.0
    assert mae(np.array([[0.25]]), np.array([[1.0]])) == pytest.approx(0.75)
    assert dice_iou(np.array([[0.25]]), np.array([[1.0]])) == (0.0, 0.0)
    assert mae(np.zeros((1, 1, 1, 4)), gt) == pytest.approx(0.5)
    with pytest.raises(ShapeError):
        mae(np.zeros((2, 1, 4)), gt)


def test_record_line_format():
    record = MetricRecord("case.pgm", 1.0, 0.5, 0.25, 0.125, 1 / 3, 0.0)
    assert record.to_line() == "case.pgm 1.000000 0.500000 0.250000 0.125000 0.333333 0.000000"


# --- directory evaluation --------------------------------------------------

def write_pairs(tmp_path, pairs):
    pred_dir, gt_dir = tmp_path / "pred", tmp_path / "gt"
    pred_dir.mkdir()
    gt_dir.mkdir()
    for name, (pred, gt) in pairs.items():
        write_image(pred, pred_dir / name)
        write_image(gt, gt_dir / name)
    return pred_dir, gt_dir


def test_evaluate_dir_perfect_predictions(tmp_path):
    gt = square_gt()
    pred_dir, gt_dir = write_pairs(tmp_path, {"a.pgm": (gt, gt), "b.pgm": (gt.T, gt.T)})
    report = evaluate_dir(pred_dir, gt_dir)
    means = report.means
    for name in ("dic", "iou", "fwb", "sm", "em"):
        assert means[name] == pytest.approx(1.0, abs=1e-6)
    assert means["mae"] == 0.0
    assert [r.name for r in report.records] == ["a.pgm", "b.pgm"]
    assert "mean" in report.to_text()


def test_evaluate_dir_means_are_plain_averages(tmp_path):
    gt = square_gt()
    soft = np.round(0.6 * gt + 0.1, 3)
    pred_dir, gt_dir = write_pairs(tmp_path, {"a.pgm": (soft, gt), "b.pgm": (gt, gt)})
    report = evaluate_dir(pred_dir, gt_dir)
    frame = report.frame
    for name, value in report.means.items():
        assert value == pytest.approx(frame[name].mean())
    parallel = evaluate_dir(pred_dir, gt_dir, workers=2)
    assert parallel.to_lines() == report.to_lines()


def test_evaluate_dir_errors(tmp_path):
    gt = square_gt()
    pred_dir, gt_dir = write_pairs(tmp_path, {"a.pgm": (gt, gt)})
    write_image(gt, pred_dir / "extra.pgm")
    with pytest.raises(EvaluationError) as info:
        evaluate_dir(pred_dir, gt_dir)
    assert info.value.names == ["extra.pgm"]

    (pred_dir / "extra.pgm").unlink()
    write_image(np.zeros((4, 4)), pred_dir / "a.pgm")
    with pytest.raises(EvaluationError, match="size mismatch"):
        evaluate_dir(pred_dir, gt_dir)

    empty_pred, empty_gt = tmp_path / "ep", tmp_path / "eg"
    empty_pred.mkdir()
    empty_gt.mkdir()
    with pytest.raises(EvaluationError, match="no pairs"):
        evaluate_dir(empty_pred, empty_gt)


def test_evaluate_dir_accepts_single_row_images(tmp_path):
    gt = np.array([[0.0, 1.0, 1.0, 0.0]])
    pred = np.array([[0.2, 0.8, 1.0, 0.0]])
    pred_dir, gt_dir = write_pairs(tmp_path, {"row.pgm": (pred, gt)})
    report = evaluate_dir(pred_dir, gt_dir)
    assert report.records[0].mae == pytest.approx(0.1, abs=1e-3)
    assert report.records[0].dic == 1.0
