//! Detector network architecture.
//!
//! Stride-1 stem (no subsampling in the first layer), compact residual
//! backbone, global average pooling, and a swappable head: projection head
//! for contrastive pretraining, single-logit classifier for detection.
//! Global pooling makes inference resolution-agnostic; no layer resamples
//! the input.

mod checkpoint;
mod config;
mod network;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::DetectorConfig;
pub use network::{build_detector, DetectorNetwork, ForwardPass, HeadKind};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::Image;
    use crate::tensorcore::RngStream;

    #[test]
    fn same_seed_gives_bit_identical_parameters() {
        let cfg = DetectorConfig::toy();
        let a = build_detector(&cfg, &RngStream::new(5, 0)).unwrap();
        let b = build_detector(&cfg, &RngStream::new(5, 0)).unwrap();
        for (pa, pb) in a.params().iter().zip(b.params()) {
            assert_eq!(pa.value, pb.value, "{}", pa.name);
        }
        let c = build_detector(&cfg, &RngStream::new(6, 0)).unwrap();
        assert!(a.params().iter().zip(c.params()).any(|(x, y)| x.value != y.value));
    }

    #[test]
    fn stem_preserves_spatial_dims() {
        // forward a 96x96 input and check the pooled features exist; the
        // stem's stride-1 "same" conv keeps 96x96, which we verify via a
        // 1-stage no-pool config where GAP input equals the image plane.
        let cfg = DetectorConfig {
            crop_size: 96,
            ..DetectorConfig::toy()
        };
        let net = build_detector(&cfg, &RngStream::new(1, 0)).unwrap();
        let img = Image::from_fn(96, 96, |_, y, x| ((x + y) % 97) as f64 / 96.0);
        let mut fp = net.forward();
        let feat = fp.features(&img).unwrap();
        assert_eq!(fp.value(feat).shape(), &[cfg.block_widths[0]]);
    }

    #[test]
    fn parameter_count_matches_hand_computation() {
        // toy config: stem 3->6 (3x3), norm 6; one stage 6->8 with proj;
        // projection head 8->32->16.
        let cfg = DetectorConfig::toy();
        let net = build_detector(&cfg, &RngStream::new(2, 0)).unwrap();
        let stem = 6 * 3 * 3 * 3 + 6 + 6 + 6;
        let block = (8 * 6 * 3 * 3 + 8) + (8 + 8) + (8 * 8 * 3 * 3 + 8) + (8 + 8) + (8 * 6 + 8);
        let head = (32 * 8 + 32) + (16 * 32 + 16);
        assert_eq!(net.param_count(), stem + block + head);
    }

    #[test]
    fn rejects_strided_stem_config() {
        let cfg = DetectorConfig {
            stem_stride: 2,
            ..DetectorConfig::toy()
        };
        assert!(build_detector(&cfg, &RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn embed_shape_and_determinism() {
        let net = build_detector(&DetectorConfig::toy(), &RngStream::new(3, 0)).unwrap();
        let img = Image::from_fn(32, 32, |c, y, x| (c + y + x) as f64 / 66.0);
        let a = net.embed(&img).unwrap();
        let b = net.embed(&img).unwrap();
        assert_eq!(a.shape(), &[16]);
        assert_eq!(a, b);
        assert!(a.all_finite());
    }

    #[test]
    fn embed_requires_projection_head() {
        let rng = RngStream::new(4, 0);
        let net = build_detector(&DetectorConfig::toy(), &rng)
            .unwrap()
            .swap_head(HeadKind::Classifier, &rng)
            .unwrap();
        let img = Image::constant(16, 16, 0.5);
        assert!(net.embed(&img).is_err());
        assert!(net.classify(&img).is_ok());
    }

    #[test]
    fn translation_of_constant_background_gives_identical_latents() {
        // constant images are translation-invariant inputs; any spatial
        // shift of them is the same image, so the latents must agree.
        let net = build_detector(&DetectorConfig::toy(), &RngStream::new(7, 0)).unwrap();
        let a = net.embed(&Image::constant(24, 24, 0.4)).unwrap();
        let b = net.embed(&Image::constant(24, 24, 0.4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_classifier_weights_score_half() {
        let rng = RngStream::new(8, 0);
        let mut net = build_detector(&DetectorConfig::toy(), &rng)
            .unwrap()
            .swap_head(HeadKind::Classifier, &rng)
            .unwrap();
        for p in net.params_mut() {
            if p.name.starts_with("head.cls") {
                p.value.fill(0.0);
            }
        }
        for img in [
            Image::constant(16, 16, 0.1),
            Image::from_fn(20, 28, |_, y, x| (y * x % 7) as f64 / 6.0),
        ] {
            assert_eq!(net.classify(&img).unwrap(), 0.5);
        }
    }

    #[test]
    fn full_resolution_inference_accepts_multiple_sizes() {
        let rng = RngStream::new(9, 0);
        let net = build_detector(&DetectorConfig::default(), &rng)
            .unwrap()
            .swap_head(HeadKind::Classifier, &rng)
            .unwrap();
        for size in [96usize, 256, 384] {
            let img = Image::from_fn(size, size, |c, y, x| {
                0.3 + 0.3 * ((x * 3 + y * 5 + c) % 11) as f64 / 10.0
            });
            let s = net.classify(&img).unwrap();
            assert!((0.0..=1.0).contains(&s), "size {size} score {s}");
        }
    }

    #[test]
    fn constant_image_scores_are_resolution_invariant() {
        let rng = RngStream::new(10, 0);
        let net = build_detector(&DetectorConfig::toy(), &rng)
            .unwrap()
            .swap_head(HeadKind::Classifier, &rng)
            .unwrap();
        let s1 = net.classify(&Image::constant(16, 16, 0.37)).unwrap();
        let s2 = net.classify(&Image::constant(200, 120, 0.37)).unwrap();
        assert!((s1 - s2).abs() < 1e-9, "{s1} vs {s2}");
    }

    #[test]
    fn too_small_input_is_rejected_not_padded() {
        let rng = RngStream::new(11, 0);
        let cfg = DetectorConfig::default(); // one pooling stage -> min 2
        let net = build_detector(&cfg, &rng)
            .unwrap()
            .swap_head(HeadKind::Classifier, &rng)
            .unwrap();
        let img = Image::constant(1, 10, 0.5);
        assert!(matches!(
            net.classify(&img),
            Err(crate::Error::InputTooSmall { .. })
        ));
    }

    #[test]
    fn swap_head_preserves_backbone_bit_exact() {
        let rng = RngStream::new(12, 0);
        let proj = build_detector(&DetectorConfig::toy(), &rng).unwrap();
        let backbone: Vec<_> = proj
            .params()
            .iter()
            .filter(|p| !p.name.starts_with("head."))
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect();
        let cls = proj.swap_head(HeadKind::Classifier, &rng.child("cls")).unwrap();
        assert_eq!(cls.head_kind(), HeadKind::Classifier);
        for (name, value) in &backbone {
            let p = cls.params().iter().find(|p| &p.name == name).unwrap();
            assert_eq!(&p.value, value);
        }
        let fc = cls.params().iter().find(|p| p.name == "head.cls.fc.w").unwrap();
        assert_eq!(fc.value.shape(), &[1, 8]);
    }

    #[test]
    fn gradients_reach_the_stem_after_head_swap() {
        let rng = RngStream::new(13, 0);
        let net = build_detector(&DetectorConfig::toy(), &rng)
            .unwrap()
            .swap_head(HeadKind::Classifier, &rng.child("cls"))
            .unwrap();
        let img = Image::from_fn(16, 16, |c, y, x| ((c * 31 + y * 7 + x) % 13) as f64 / 12.0);
        let mut fp = net.forward();
        let logit = fp.classify_logit(&img).unwrap();
        let loss = fp.graph().bce_with_logit(logit, 1.0).unwrap();
        let grads = fp.backward(loss).unwrap();
        let stem_idx = net
            .params()
            .iter()
            .position(|p| p.name == "stem.conv.w")
            .unwrap();
        let g = grads[stem_idx].as_ref().expect("stem gradient present");
        assert!(g.data().iter().any(|&v| v != 0.0));
        assert!(g.all_finite());
        // every trainable parameter receives a finite gradient
        for (p, g) in net.params().iter().zip(&grads) {
            let g = g.as_ref().unwrap_or_else(|| panic!("no grad for {}", p.name));
            assert!(g.all_finite(), "{}", p.name);
        }
    }
}
