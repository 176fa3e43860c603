mod common;

use apmtrack_core::bbox::BBox;
use apmtrack_core::config::{FusionMode, PipelineConfig, SparsifyMode};
use apmtrack_core::diff_attn::{attention_operator, AttentionVariant, DiffAttnWeights, Window};
use apmtrack_core::events::{crop_region, slice_window, voxelize, CropFill, Event, EventStream};
use apmtrack_core::flops::flops_report;
use apmtrack_core::fusion::{ap_attention, attention_weights, dapa_fuse, DapaWeights};
use apmtrack_core::head::decode_bbox;
use apmtrack_core::loss::{giou_loss, total_loss, LossWeights};
use apmtrack_core::metrics::compute_metrics;
use apmtrack_core::mgss::{adaptive_k, fuse_and_scatter, topk_indices, Decay, KParams, ScoreMap};
use apmtrack_core::motion::{diff_maps, event_encode, pool_diffs, EncoderWeights};
use apmtrack_core::numerics::{
    amp_phase, conv2d, fft1d_with, fft2, fft2_real, l2_normalize, recompose, softmax, FftPath,
};
use apmtrack_core::rng::SeededRng;
use apmtrack_core::weights::init_from_specs;
use apmtrack_core::{ComplexTensor, RealTensor};
use num_complex::Complex64;
use proptest::prelude::*;

use common::{conv_oracle, random_tensor, topk_oracle};

fn complex(shape: &[usize], rng: &mut SeededRng) -> ComplexTensor {
    ComplexTensor::from_fn(shape, |_| Complex64::new(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0))).unwrap()
}

fn events(rng: &mut SeededRng, n: usize, w: u16, h: u16, t0: u64, t1: u64) -> Vec<Event> {
    (0..n)
        .map(|_| Event {
            t: t0 + rng.below((t1 - t0) as usize) as u64,
            x: rng.below(w.into()) as u16,
            y: rng.below(h.into()) as u16,
            p: if rng.below(2) == 0 { -1 } else { 1 },
        })
        .collect()
}

fn attn(dim: usize, seed: u64, lambda: f64, window: Window) -> DiffAttnWeights {
    let b = init_from_specs(&DiffAttnWeights::specs("d", dim), seed);
    DiffAttnWeights::from_bundle(&b, "d", lambda, window, AttentionVariant::DiffFft).unwrap()
}

fn corner_box() -> impl Strategy<Value = BBox> {
    (-50.0..50.0f64, -50.0..50.0f64, 0.5..40.0f64, 0.5..40.0f64).prop_map(|(x, y, w, h)| BBox::from_corner(x, y, w, h))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fft_is_linear(seed: u64, h in 1usize..20, w in 1usize..20, a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let mut rng = SeededRng::new(seed);
        let (x, y) = (complex(&[h, w], &mut rng), complex(&[h, w], &mut rng));
        let lhs = fft2(&x.zip_map(&y, |p, q| p * a + q * b).unwrap()).unwrap();
        let (fx, fy) = (fft2(&x).unwrap(), fft2(&y).unwrap());
        let rhs = fx.zip_map(&fy, |p, q| p * a + q * b).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-10);
    }

    #[test]
    fn parseval_holds(seed: u64, h in 1usize..40, w in 1usize..40) {
        let mut rng = SeededRng::new(seed);
        let x = complex(&[h, w], &mut rng);
        prop_assert!((fft2(&x).unwrap().norm_sq() - x.norm_sq()).abs() < 1e-9);
    }

    #[test]
    fn real_input_has_conjugate_symmetry(seed: u64, h in 1usize..20, w in 1usize..20) {
        let mut rng = SeededRng::new(seed);
        let spec = fft2_real(&random_tensor(&[h, w], &mut rng, -1.0, 1.0)).unwrap();
        for u in 0..h {
            for v in 0..w {
                let mirror = spec.at(&[(h - u) % h, (w - v) % w]).conj();
                prop_assert!((spec.at(&[u, v]) - mirror).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn fft_paths_agree(seed: u64, log in 0u32..9) {
        let n = 1usize << log;
        let mut rng = SeededRng::new(seed);
        let x = complex(&[n], &mut rng).into_data();
        let fast = fft1d_with(&x, FftPath::Radix2, false).unwrap();
        let direct = fft1d_with(&x, FftPath::Direct, false).unwrap();
        let blue = fft1d_with(&x, FftPath::Bluestein, false).unwrap();
        for ((a, b), c) in fast.iter().zip(&direct).zip(&blue) {
            prop_assert!((a - b).norm() < 1e-9 && (a - c).norm() < 1e-9);
        }
    }

    #[test]
    fn spectral_round_trip(seed: u64, h in 1usize..16, w in 1usize..16) {
        let mut rng = SeededRng::new(seed);
        let x = complex(&[h, w], &mut rng);
        prop_assert!(recompose(&amp_phase(&x).unwrap()).unwrap().max_abs_diff(&x) < 1e-10);
    }

    #[test]
    fn softmax_and_l2_normalize(seed: u64, n in 1usize..12, c in 1usize..12, zero_row in any::<bool>()) {
        let mut rng = SeededRng::new(seed);
        let mut x = random_tensor(&[n, c], &mut rng, -30.0, 30.0);
        if zero_row {
            x.data_mut()[..c].iter_mut().for_each(|v| *v = 0.0);
        }
        for row in softmax(&x, 1).unwrap().data().chunks(c) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        for row in l2_normalize(&x, 1).unwrap().data().chunks(c) {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn conv_matches_loop_oracle(
        seed: u64, h in 3usize..12, w in 3usize..12, cin in 1usize..4, cout in 1usize..4,
        k in prop::sample::select(vec![1usize, 3, 5]), stride in 1usize..3, pad in 0usize..3,
    ) {
        prop_assume!(h + 2 * pad >= k && w + 2 * pad >= k);
        let mut rng = SeededRng::new(seed);
        let x = random_tensor(&[h, w, cin], &mut rng, -1.0, 1.0);
        let kernel = random_tensor(&[k, k, cin, cout], &mut rng, -1.0, 1.0);
        let fast = conv2d(&x, &kernel, None, stride, pad).unwrap();
        prop_assert!(fast.max_abs_diff(&conv_oracle(&x, &kernel, stride, pad)) < 1e-12);
    }

    #[test]
    fn voxel_mass_and_additivity(seed: u64, n in 1usize..300, span in 2u64..50_000, bins in 2usize..8) {
        let mut rng = SeededRng::new(seed);
        let (t0, t1) = (100, 100 + span);
        let ev = events(&mut rng, n, 16, 12, t0, t1);
        let (a, b): (Vec<Event>, Vec<Event>) = ev.iter().partition(|_| rng.below(2) == 0);
        let vox = |e: Vec<Event>| voxelize(&EventStream::new(16, 12, e), bins, t0, t1).unwrap().data;
        for e in &ev {
            let mass: f64 = vox(vec![*e]).data().iter().map(|v| v.abs()).sum();
            prop_assert!((mass - 1.0).abs() < 1e-9);
        }
        let joint = vox(ev.clone());
        let signed: f64 = ev.iter().map(|e| f64::from(e.p)).sum();
        prop_assert!((joint.sum() - signed).abs() < 1e-9);
        prop_assert!(joint.max_abs_diff(&vox(a).add(&vox(b)).unwrap()) < 1e-12);
    }

    #[test]
    fn windows_concatenate(seed: u64, n in 0usize..200, cut1 in 0u64..1000, cut2 in 0u64..1000) {
        let mut rng = SeededRng::new(seed);
        let s = EventStream::new(8, 8, events(&mut rng, n, 8, 8, 0, 1000));
        let (t1, t2) = (cut1.min(cut2), cut1.max(cut2));
        let mut joined = slice_window(&s, 0, t1).unwrap().events;
        joined.extend(slice_window(&s, t1, t2).unwrap().events);
        prop_assert_eq!(joined, slice_window(&s, 0, t2).unwrap().events);
    }

    #[test]
    fn constant_image_crops_to_constant(
        value in 0.0..1.0f64, b in corner_box(), factor in 0.5..4.0f64, fill_mean in any::<bool>(),
    ) {
        let img = RealTensor::full(&[40, 50, 3], value).unwrap();
        let fill = if fill_mean { CropFill::ChannelMean } else { CropFill::Zero };
        let b = BBox::new(b.cx.abs() % 50.0, b.cy.abs() % 40.0, b.w, b.h);
        let crop = crop_region(&img, &b, factor, 16, fill).unwrap();
        if fill_mean {
            prop_assert!(crop.pixels.data().iter().all(|v| (v - value).abs() < 1e-12));
        } else {
            // zero fill blends toward 0 at the frame edge
            prop_assert!(crop.pixels.data().iter().all(|&v| (-1e-12..=value + 1e-12).contains(&v)));
        }
    }

    #[test]
    fn attention_weights_are_distributions(seed: u64, c in 1usize..20, s in 1e-6..1e6f64) {
        let mut rng = SeededRng::new(seed);
        let base = random_tensor(&[3, 4, c], &mut rng, -5.0, 5.0);
        let guide = random_tensor(&[3, 4, c], &mut rng, -5.0, 5.0);
        let m = attention_weights(&base, &guide).unwrap();
        for px in m.data().chunks(c) {
            prop_assert!((px.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(px.iter().all(|&v| v > 0.0 && v <= 1.0));
        }
        let out = ap_attention(&base, &guide).unwrap();
        let residual = m.zip_map(&base, |w, b| w * b).unwrap();
        prop_assert!(out.zip_map(&base, |o, b| o - b).unwrap().max_abs_diff(&residual) < 1e-15);
        prop_assert!(ap_attention(&base, &guide.scale(s)).unwrap().max_abs_diff(&out) < 1e-10);
    }

    #[test]
    fn fusion_is_deterministic(seed: u64) {
        let mut rng = SeededRng::new(seed);
        let rgb = random_tensor(&[16, 16, 3], &mut rng, 0.0, 1.0);
        let evt = random_tensor(&[16, 16, 5], &mut rng, -1.0, 1.0);
        let w = DapaWeights::from_bundle(&init_from_specs(&DapaWeights::specs("f", 3, 5, 4), seed), "f").unwrap();
        let a = dapa_fuse(&rgb, &evt, &w, 1.6).unwrap();
        prop_assert!(a.is_finite());
        prop_assert_eq!(a, dapa_fuse(&rgb, &evt, &w, 1.6).unwrap());
    }

    #[test]
    fn diff_maps_telescope(seed: u64, bins in 2usize..7) {
        let mut rng = SeededRng::new(seed);
        let f = random_tensor(&[bins, 3, 3, 4], &mut rng, -1.0, 1.0);
        let d = diff_maps(&f, 1).unwrap();
        let plane = 36;
        for k in 0..plane {
            let sum: f64 = (0..bins - 1).map(|j| d.data()[j * plane + k]).sum();
            let ends = f.data()[(bins - 1) * plane + k] - f.data()[k];
            prop_assert!((sum - ends).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_features_have_no_motion(seed: u64, bins in 2usize..7) {
        let mut rng = SeededRng::new(seed);
        let one = random_tensor(&[3, 3, 4], &mut rng, -1.0, 1.0);
        let f = RealTensor::new(vec![bins, 3, 3, 4], one.data().repeat(bins)).unwrap();
        prop_assert!(pool_diffs(&diff_maps(&f, 1).unwrap()).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pooling_ignores_map_order(seed: u64, m in 1usize..6, shift in 0usize..6) {
        let mut rng = SeededRng::new(seed);
        let d = random_tensor(&[m, 2, 2, 3], &mut rng, -1.0, 1.0);
        let plane = 12;
        let rotated: Vec<f64> = (0..m).flat_map(|j| d.data()[((j + shift) % m) * plane..][..plane].to_vec()).collect();
        let rotated = RealTensor::new(d.shape().to_vec(), rotated).unwrap();
        prop_assert!(pool_diffs(&d).unwrap().max_abs_diff(&pool_diffs(&rotated).unwrap()) < 1e-15);
    }

    #[test]
    fn attention_operator_is_linear_in_v(seed: u64, n in 1usize..10) {
        let mut rng = SeededRng::new(seed);
        let x = random_tensor(&[n, 8], &mut rng, -1.0, 1.0);
        let w = attn(8, seed, 0.8, Window::Auto);
        let mut doubled = w.clone();
        doubled.w_v = w.w_v.scale(2.0);
        let base = attention_operator(&x, &w).unwrap();
        prop_assert!(attention_operator(&x, &doubled).unwrap().max_abs_diff(&base.scale(2.0)) < 1e-12);
        prop_assert_eq!(attention_operator(&x, &w).unwrap(), base);
    }

    #[test]
    fn wide_window_approaches_unwindowed(seed: u64, n in 1usize..12) {
        let mut rng = SeededRng::new(seed);
        let x = random_tensor(&[n, 8], &mut rng, -1.0, 1.0);
        let wide = attention_operator(&x, &attn(8, seed, 0.8, Window::Sigma(1e6))).unwrap();
        let open = attention_operator(&x, &attn(8, seed, 0.8, Window::Disabled)).unwrap();
        prop_assert!(wide.max_abs_diff(&open) < 1e-8);
    }

    #[test]
    fn budget_is_monotone_and_clamped(
        k_min in 1usize..100, extra in 0usize..200, beta in 1u32..6,
        decay in prop::sample::select(vec![Decay::Exp, Decay::Linear, Decay::Power]),
    ) {
        let p = KParams { k_min, k_max: k_min + extra, beta, decay };
        let ks: Vec<usize> = (0..=100).map(|i| p.k_at(f64::from(i) / 100.0).unwrap()).collect();
        prop_assert!(ks.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(ks.iter().all(|k| (k_min..=k_min + extra).contains(k)));
        prop_assert_eq!(ks[0], k_min + extra);
    }

    #[test]
    fn constant_and_balanced_variance(value in 0.0..=1.0f64, n in 1usize..100) {
        let constant = ScoreMap::new(vec![value; n]).unwrap();
        prop_assert_eq!(constant.variance(), 0.0);
        let balanced = ScoreMap::new((0..2 * n).map(|i| (i % 2) as f64).collect()).unwrap();
        prop_assert_eq!(balanced.variance(), 0.25);
        let p = KParams { k_min: 98, k_max: 196, beta: 2, decay: Decay::Exp };
        prop_assert_eq!(adaptive_k(&constant, &p).unwrap().k, 196);
    }

    #[test]
    fn topk_matches_full_sort(seed: u64, n in 1usize..200, levels in 1usize..10) {
        let mut rng = SeededRng::new(seed);
        let scores: Vec<f64> = (0..n).map(|_| rng.below(levels) as f64 / levels as f64).collect();
        let k = 1 + rng.below(n);
        let idx = topk_indices(&scores, k).unwrap();
        prop_assert_eq!(&idx, &topk_oracle(&scores, k));
        let evt = random_tensor(&[n, 3], &mut rng, 0.5, 1.0);
        let sel = random_tensor(&[k, 3], &mut rng, 0.5, 1.0);
        let out = fuse_and_scatter(&sel, &evt, &ScoreMap::new(scores).unwrap(), &idx).unwrap();
        prop_assert_eq!(out.data().chunks(3).filter(|r| r.iter().all(|&v| v == 0.0)).count(), n - k);
    }

    #[test]
    fn monotone_rescaling_keeps_selection(seed: u64, n in 1usize..100, a in 0.01..10.0f64, b in -1.0..1.0f64) {
        let mut rng = SeededRng::new(seed);
        let scores: Vec<f64> = (0..n).map(|_| rng.unit()).collect();
        let k = 1 + rng.below(n);
        let scaled: Vec<f64> = scores.iter().map(|s| a * s + b).collect();
        prop_assert_eq!(topk_indices(&scores, k).unwrap(), topk_indices(&scaled, k).unwrap());
    }

    #[test]
    fn giou_loss_is_symmetric_and_shift_invariant(a in corner_box(), b in corner_box(), dx in -100.0..100.0f64, dy in -100.0..100.0f64) {
        let l = giou_loss(&a, &b).unwrap();
        prop_assert!((l - giou_loss(&b, &a).unwrap()).abs() < 1e-12);
        let shift = |x: &BBox| BBox::new(x.cx + dx, x.cy + dy, x.w, x.h);
        prop_assert!((l - giou_loss(&shift(&a), &shift(&b)).unwrap()).abs() < 1e-12);
        prop_assert!((0.0..2.0).contains(&l));
        prop_assert_eq!(giou_loss(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn total_loss_is_linear(f in 0.0..10.0f64, l in 0.0..10.0f64, g in 0.0..2.0f64, s in 0.0..4.0f64) {
        let w = LossWeights::default();
        let base = total_loss(f, l, g, &w);
        prop_assert!((total_loss(f + s, l, g, &w) - base - s).abs() < 1e-12);
        prop_assert!((total_loss(f, l + s, g, &w) - base - 5.0 * s).abs() < 1e-12);
        prop_assert!((total_loss(f, l, g + s, &w) - base - 2.0 * s).abs() < 1e-12);
    }

    #[test]
    fn shuffling_non_peak_cells_keeps_the_box(seed: u64) {
        let mut rng = SeededRng::new(seed);
        let (h, w) = (6, 7);
        let mut cls = random_tensor(&[h, w], &mut rng, 0.0, 0.9);
        let peak = rng.below(h * w);
        cls.data_mut()[peak] = 0.95;
        let offset = random_tensor(&[h, w, 2], &mut rng, -0.5, 0.5);
        let size = random_tensor(&[h, w, 2], &mut rng, 0.05, 0.9);
        let before = decode_bbox(&cls, &offset, &size).unwrap();
        let mut others: Vec<usize> = (0..h * w).filter(|&i| i != peak).collect();
        for i in (1..others.len()).rev() {
            others.swap(i, rng.below(i + 1));
        }
        let mut shuffled = cls.clone();
        let values: Vec<f64> = (0..h * w).filter(|&i| i != peak).map(|i| cls.data()[i]).collect();
        for (dst, v) in others.iter().zip(values) {
            shuffled.data_mut()[*dst] = v;
        }
        prop_assert_eq!(decode_bbox(&shuffled, &offset, &size).unwrap(), before);
    }

    #[test]
    fn metric_curves_are_bounded_and_monotone(seed: u64, n in 1usize..30) {
        let mut rng = SeededRng::new(seed);
        let mut b = || BBox::new(rng.uniform(0.0, 100.0), rng.uniform(0.0, 100.0), rng.uniform(1.0, 40.0), rng.uniform(1.0, 40.0));
        let pred: Vec<BBox> = (0..n).map(|_| b()).collect();
        let gt: Vec<BBox> = (0..n).map(|_| b()).collect();
        let m = compute_metrics(&pred, &gt).unwrap();
        let unit = |v: &f64| (0.0..=1.0).contains(v);
        prop_assert!(m.sr_curve.iter().all(unit) && m.npr_curve.iter().all(unit));
        prop_assert!(unit(&m.pr20) && unit(&m.sr_auc) && unit(&m.npr_auc));
        prop_assert!(m.sr_curve.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(m.npr_curve.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn flops_totals_and_token_identity(ks in prop::collection::vec(98usize..=196, 1..10)) {
        for (fusion, sparsify) in [
            (FusionMode::Dapa, SparsifyMode::Mgss),
            (FusionMode::Dapa, SparsifyMode::None),
            (FusionMode::Add, SparsifyMode::Random),
            (FusionMode::Concat, SparsifyMode::Mgss),
        ] {
            let cfg = PipelineConfig { fusion, sparsify, ..PipelineConfig::default() };
            let r = flops_report(&cfg, &ks);
            prop_assert_eq!(r.total, r.stages.iter().map(|s| s.flops).sum::<u64>());
            prop_assert_eq!(r.baseline_total, r.baseline_stages.iter().map(|s| s.flops).sum::<u64>());
            let expect: Vec<usize> = match (fusion, sparsify) {
                (FusionMode::Concat, _) => vec![2 * (49 + 196); ks.len()],
                (_, SparsifyMode::None) => vec![49 + 196; ks.len()],
                _ => ks.iter().map(|k| 49 + k).collect(),
            };
            prop_assert_eq!(&r.backbone_tokens, &expect);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn encoder_is_equivariant_to_bin_order(seed: u64, shift in 1usize..4) {
        let mut rng = SeededRng::new(seed);
        let bins = 4;
        let v = random_tensor(&[bins, 32, 32], &mut rng, -1.0, 1.0);
        let w = EncoderWeights::from_bundle(&init_from_specs(&EncoderWeights::specs("m", 8), seed), "m").unwrap();
        let plane = 32 * 32;
        let perm: Vec<usize> = (0..bins).map(|b| (b + shift) % bins).collect();
        let permuted: Vec<f64> = perm.iter().flat_map(|&b| v.data()[b * plane..][..plane].to_vec()).collect();
        let f = event_encode(&v, &w).unwrap();
        let fp = event_encode(&RealTensor::new(vec![bins, 32, 32], permuted).unwrap(), &w).unwrap();
        let out_plane = f.len() / bins;
        for (i, &b) in perm.iter().enumerate() {
            prop_assert_eq!(&fp.data()[i * out_plane..][..out_plane], &f.data()[b * out_plane..][..out_plane]);
        }
    }
}
