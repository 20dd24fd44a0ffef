"""Regenerates the frozen oracle fixtures under ../fixtures.

Independent of the Rust code: arbitrary precision powers via mpmath, SSIM via
scikit-image, and a direct numpy transcription of the toy descriptor.
"""
from pathlib import Path

import mpmath
import numpy as np
from skimage.metrics import structural_similarity

OUT = Path(__file__).resolve().parent.parent / "fixtures"
mpmath.mp.dps = 50

MASK = (1 << 64) - 1


def lcg_bytes(seed, n):
    s, out = seed, []
    for _ in range(n):
        s = (s * 6364136223846793005 + 1442695040888963407) & MASK
        out.append(s >> 56)
    return out


def fod_power():
    rng = np.random.default_rng(20240521)
    ods = rng.uniform(0.0, 3.0, 1000)
    with open(OUT / "fod_power_oracle.csv", "w") as f:
        f.write("od,power,fod\n")
        for od in ods:
            od = float(od)
            p = mpmath.power(mpmath.mpf(od), mpmath.mpf("1.8"))
            fod = p if p > mpmath.mpf("0.15") else mpmath.mpf(0)
            f.write(f"{od!r},{mpmath.nstr(p, 25)},{mpmath.nstr(fod, 25)}\n")


def noise_pair(w=32, h=24):
    a = np.array(lcg_bytes(7, w * h * 3), dtype=np.int64)
    n = np.array(lcg_bytes(11, w * h * 3), dtype=np.int64)
    b = np.clip(a + (n - 128) // 4, 0, 255)
    return a.reshape(h, w, 3), b.reshape(h, w, 3)


def luma(img):
    img = img.astype(np.float64)
    return 0.299 * img[..., 0] + 0.587 * img[..., 1] + 0.114 * img[..., 2]


def ssim_noise():
    a, b = noise_pair()
    s = structural_similarity(
        luma(a), luma(b), gaussian_weights=True, sigma=1.5,
        use_sample_covariance=False, data_range=255.0, K1=0.01, K2=0.03,
    )
    (OUT / "ssim_noise_oracle.txt").write_text(f"{float(s)!r}\n")


def checkerboard(w=16, h=12, cell=3):
    c0, c1 = (200, 40, 90), (30, 180, 250)
    img = np.zeros((h, w, 3), dtype=np.int64)
    for y in range(h):
        for x in range(w):
            img[y, x] = c0 if ((x // cell) + (y // cell)) % 2 == 0 else c1
    return img


def toy(img):
    h, w, _ = img.shape
    f = img.astype(np.float64).reshape(-1, 3)
    feats = list(f.mean(axis=0)) + list(f.std(axis=0))
    for c in range(3):
        hist = np.zeros(8)
        for v in img[..., c].ravel():
            hist[min(v // 32, 7)] += 1
        feats += list(hist / hist.sum())
    g = luma(img)
    for by in range(4):
        for bx in range(4):
            cell = g[by * h // 4:(by + 1) * h // 4, bx * w // 4:(bx + 1) * w // 4]
            feats.append(cell.mean() / 255.0)
    return feats


def toy_golden():
    v = toy(checkerboard())
    assert len(v) == 46
    (OUT / "toy_checkerboard_golden.txt").write_text("\n".join(repr(float(x)) for x in v) + "\n")


if __name__ == "__main__":
    OUT.mkdir(exist_ok=True)
    fod_power()
    ssim_noise()
    toy_golden()
