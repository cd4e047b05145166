from itertools import combinations

import numpy as np
import pytest

from retrain.encoder_util import (
    LDP_RANK, CodeMap, Method, codemap_to_image, encode, encode_baseline, encode_retrain,
    ldn_pair_code, load_codemap, save_codemap
)
from retrain.error_util import CorruptModelError, ImageTooSmallError, UnknownMethodError
from retrain.image_util import GrayImage
from retrain.random_util import ImageGenerator

# 独立书写的掩模与方向，不复用被测模块
ORACLE_MASKS = [
    [[-1, -1, 2], [-1, -1, 2], [-1, -1, 2]],
    [[-1, 2, 2], [-1, -1, 2], [-1, -1, -1]],
    [[2, 2, 2], [-1, -1, -1], [-1, -1, -1]],
    [[2, 2, -1], [2, -1, -1], [-1, -1, -1]],
    [[2, -1, -1], [2, -1, -1], [2, -1, -1]],
    [[-1, -1, -1], [2, -1, -1], [2, 2, -1]],
    [[-1, -1, -1], [-1, -1, -1], [2, 2, 2]],
    [[-1, -1, -1], [-1, -1, 2], [-1, 2, 2]],
]
ORACLE_OFFSETS = [(0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1)]


def _first_max(values):
    best = 0
    for k in range(1, len(values)):
        if values[k] > values[best]:
            best = k
    return best


def oracle_retrain(image: GrayImage):
    """逐像素直接读取 3×3 邻域的 RETRaIN 参考实现"""
    pixels = image.pixels.tolist()
    h, w = image.height, image.width

    def at(i, j):
        return pixels[min(max(i, 0), h - 1)][min(max(j, 0), w - 1)]

    response = [[[0] * 8 for _ in range(w)] for _ in range(h)]
    for i in range(h):
        for j in range(w):
            for alpha, mask in enumerate(ORACLE_MASKS):
                total = 0
                for di in (-1, 0, 1):
                    for dj in (-1, 0, 1):
                        total += mask[di + 1][dj + 1] * at(i + di, j + dj)
                response[i][j][alpha] = total

    codes = []
    for i in range(h):
        row = []
        for j in range(w):
            primary = _first_max([abs(v) for v in response[i][j]])
            extended = []
            for alpha, (di, dj) in enumerate(ORACLE_OFFSETS):
                ni, nj = min(max(i + di, 0), h - 1), min(max(j + dj, 0), w - 1)
                extended.append(abs(response[ni][nj][alpha]))
            row.append(8 * primary + _first_max(extended))
        codes.append(row)
    return codes


def test_retrain_matches_oracle():
    generator = ImageGenerator(seed=11)
    for _ in range(200):
        h, w = (int(v) for v in generator.rng.integers(8, 33, size=2))
        image = generator.uniform(h, w)
        assert encode_retrain(image).codes.tolist() == oracle_retrain(image)


def test_retrain_step_code(step_image):
    codes = encode_retrain(step_image)
    # P = 4 (W)，S = 3 (NW)
    assert int(codes.codes[2, 2]) == 35
    assert codes.code_count == 64 and codes.method is Method.RETRAIN


@pytest.mark.parametrize("method, expected", [
    (Method.RETRAIN, 0),
    (Method.LBP, 255),
    (Method.CSLBP, 0),
    (Method.LDP, 0),
    (Method.LDN, 0),
])
def test_flat_image_codes(flat_image, method, expected):
    codes = encode(flat_image, method)
    assert codes.codes.shape == (8, 8)
    assert set(codes.codes.ravel().tolist()) == {expected}


def test_code_counts():
    assert {m: m.code_count for m in Method} == {
        Method.RETRAIN: 64, Method.LBP: 256, Method.CSLBP: 16, Method.LDP: 56, Method.LDN: 56,
    }


def test_lbp_and_cslbp_bits():
    pixels = np.zeros((5, 5), dtype=np.uint8)
    pixels[2, 2] = 50
    pixels[2, 3] = 60  # E
    pixels[1, 1] = 50  # NW
    image = GrayImage(pixels)
    # LBP：E (bit 0) 与 NW (bit 3) 不小于中心
    assert int(encode(image, Method.LBP).codes[2, 2]) == 0b1001
    # CSLBP：E > W + 1 (bit 0)，NW > SE + 1 (bit 3)
    assert int(encode(image, Method.CSLBP).codes[2, 2]) == 0b1001


def test_ldp_and_ldn_on_step(step_image):
    # |R| = [300, 300, 0, 300, 600, 300, 0, 300]：前三为 {4, 0, 1}
    assert int(encode(step_image, Method.LDP).codes[2, 2]) == list(combinations(range(8), 3)).index((0, 1, 4))
    # R = [300, 300, 0, -300, -600, -300, 0, 300]：argmax 0，argmin 4
    assert int(encode(step_image, Method.LDN).codes[2, 2]) == 7 * 0 + (4 - 1)


def test_ldp_rank_table_is_dense():
    ranks = LDP_RANK[LDP_RANK >= 0]
    assert sorted(ranks.tolist()) == list(range(56))


def test_ldn_pair_code_is_a_bijection():
    pairs = [(a, b) for a in range(8) for b in range(8) if a != b]
    codes = ldn_pair_code(np.array([a for a, _ in pairs]), np.array([b for _, b in pairs]))
    assert sorted(codes.tolist()) == list(range(56))


def test_gain_offset_invariance():
    generator = ImageGenerator(seed=3)
    for _ in range(50):
        h, w = (int(v) for v in generator.rng.integers(8, 25, size=2))
        image = generator.uniform(h, w, 0, (255 - 40) // 3)
        originals = {m: encode(image, m).codes for m in (Method.RETRAIN, Method.LDP, Method.LDN)}
        for _ in range(10):
            a, b = generator.gain_offset(gains=(2, 3), max_offset=40)
            remapped = GrayImage(a * image.pixels.astype(np.int64) + b)
            for method, codes in originals.items():
                assert np.array_equal(encode(remapped, method).codes, codes), (method, a, b)


def test_monotone_remap_invariance():
    generator = ImageGenerator(seed=5)
    for _ in range(50):
        h, w = (int(v) for v in generator.rng.integers(8, 25, size=2))
        image = generator.lattice(h, w, levels=32, step=4)
        originals = {m: encode(image, m).codes for m in (Method.LBP, Method.CSLBP)}
        for _ in range(10):
            # 严格递增查找表，相邻灰度级至少相差 2
            steps = generator.rng.integers(2, 7, size=32)
            table = np.cumsum(steps) - steps[0]
            remapped = GrayImage(table[image.pixels // 4])
            for method, codes in originals.items():
                assert np.array_equal(encode(remapped, method).codes, codes), method


def test_method_parse():
    assert Method.parse("cs-lbp") is Method.CSLBP
    assert Method.parse(" retrain ") is Method.RETRAIN
    with pytest.raises(UnknownMethodError):
        Method.parse("SIFT")


def test_encode_baseline_rejects_retrain(step_image):
    with pytest.raises(UnknownMethodError):
        encode_baseline(step_image, Method.RETRAIN)


def test_too_small_for_every_method():
    tiny = GrayImage(np.zeros((4, 4), dtype=np.uint8))
    for method in Method:
        with pytest.raises(ImageTooSmallError):
            encode(tiny, method)


def test_codemap_range_is_checked():
    with pytest.raises(ValueError):
        CodeMap(np.array([[64]]), 64, Method.RETRAIN)


def test_codemap_to_image_scaling(flat_image):
    assert not codemap_to_image(encode(flat_image, Method.RETRAIN)).pixels.any()
    assert set(codemap_to_image(encode(flat_image, Method.LBP)).pixels.ravel().tolist()) == {255}
    # RETRAIN 码 35 → 35 · floor(255 / 63) = 140
    codes = CodeMap(np.array([[35]]), 64, Method.RETRAIN)
    assert codemap_to_image(codes).to_rows() == [[140]]


def test_codemap_file(tmp_path, image_generator):
    codes = encode(image_generator.uniform(9, 13), Method.LDN)
    path = save_codemap(codes, tmp_path / "map.dpcm")
    assert path.read_bytes()[:8] == b"DPCM0001"
    loaded = load_codemap(path)
    assert loaded.method is Method.LDN and loaded.code_count == 56
    assert np.array_equal(loaded.codes, codes.codes)


def test_codemap_file_truncated(tmp_path, step_image):
    path = save_codemap(encode(step_image, Method.RETRAIN), tmp_path / "map.dpcm")
    path.write_bytes(path.read_bytes()[:-2])
    with pytest.raises(CorruptModelError):
        load_codemap(path)
