mod common;

use ccpl_core::perception::dual_perception_loss;
use ccpl_core::stain::{compose, ConcentrationImage, DEFAULT_I0};
use ccpl_core::{CcplConfig, RgbImage};

fn scale_dab(c: &ConcentrationImage, k: f64) -> ConcentrationImage {
    ConcentrationImage::from_fn(c.width, c.height, |x, y| {
        let [h, e, d] = c.pixel(y * c.width + x);
        [h, e, k * d]
    })
}

#[test]
fn dab_loss_grows_with_concentration_gap() {
    let cfg = CcplConfig::default();
    let m = &cfg.stain_matrix;
    for seed in 0..10 {
        let c = common::tissue_concentrations(100 + seed, 48, 48);
        let real: RgbImage = compose(&c, m, DEFAULT_I0);
        let losses: Vec<f64> = (0..=5)
            .map(|i| {
                let k = 1.0 + 0.2 * i as f64;
                let gen: RgbImage = compose(&scale_dab(&c, k), m, DEFAULT_I0);
                dual_perception_loss(&gen, &real, &cfg.dcp, &cfg.fod_h, &cfg.fod_d, m, DEFAULT_I0)
                    .unwrap()
                    .l_d
            })
            .collect();
        assert_eq!(losses[0], 0.0);
        assert!(losses.windows(2).all(|w| w[1] >= w[0]), "seed {seed}: {losses:?}");
    }
}
