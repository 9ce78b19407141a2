use percept_core::engine::softmax;
use percept_core::metrics::{equal_amount_bins, mi_from_counts, mi_per_neuron, MiSample};
use percept_core::stats::{linfit_eval, srocc};
use percept_core::stimuli::{
    db_to_std, enumerate_configs, render_grating, std_to_db, synth_noise, CategoryLabel, Condition, GratingSpec,
    NoiseMode, NoiseSpec, Paradigm, PatternGeometry, PatternRenderer,
};
use percept_core::Rect;
use proptest::prelude::*;

fn brute_mi(joint: &[Vec<usize>]) -> f64 {
    let n: usize = joint.iter().flatten().sum();
    let n = n as f64;
    let k = joint[0].len();
    let pb: Vec<f64> = joint.iter().map(|r| r.iter().sum::<usize>() as f64 / n).collect();
    let pc: Vec<f64> = (0..k)
        .map(|c| joint.iter().map(|r| r[c]).sum::<usize>() as f64 / n)
        .collect();
    let mut mi = 0.0;
    for (b, row) in joint.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            if v > 0 {
                let p = v as f64 / n;
                mi += p * (p / (pb[b] * pc[c])).log2();
            }
        }
    }
    mi
}

fn naive_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|x| {
            let less = v.iter().filter(|y| *y < x).count() as f64;
            let equal = v.iter().filter(|y| *y == x).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

fn naive_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn balanced_labels(categories: usize, per: usize) -> Vec<usize> {
    (0..categories).flat_map(|c| std::iter::repeat_n(c, per)).collect()
}

fn monotone(kind: usize, a: f64, b: f64, x: f64) -> f64 {
    match kind % 5 {
        0 => a * x + b,
        1 => (x / 4.0).exp() * a,
        2 => x.powi(3) + b,
        3 => x.atan() * a,
        _ => (x + 10.0).ln() - b,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn db_round_trip(db in -120.0f64..120.0, t in 1.0f64..255.0) {
        let s = db_to_std(db, t).unwrap();
        prop_assert!((std_to_db(s, t).unwrap() - db).abs() <= 1e-12 * db.abs().max(1.0));
        prop_assert!((db_to_std(std_to_db(s, t).unwrap(), t).unwrap() - s).abs() <= 1e-12 * s);
    }

    #[test]
    fn noise_std_matches_level(seed in any::<u64>(), db in -30.0f64..0.0, gaussian in any::<bool>()) {
        let region = Rect::new(8, 12, 40, 30);
        let mode = if gaussian { NoiseMode::Gaussian } else { NoiseMode::RandomPhase };
        let spec = NoiseSpec::new(region, db, seed).with_mode(mode);
        let field = synth_noise(&spec, 64, 64, 100.0).unwrap();
        let want = db_to_std(db, 100.0).unwrap();
        prop_assert!((field.region_std(&region) / want - 1.0).abs() < 0.01);
    }

    #[test]
    fn plug_in_mi_equals_double_sum(joint in prop::collection::vec(prop::collection::vec(0usize..40, 3), 2..9)) {
        prop_assume!(joint.iter().flatten().sum::<usize>() > 0);
        prop_assert!((mi_from_counts(&joint) - brute_mi(&joint)).abs() <= 1e-9);
    }

    #[test]
    fn mi_bounds(categories in 2usize..5, per in 2usize..30, bins in 2usize..12, seed in any::<u64>()) {
        let mut rng = percept_core::seed::rng(seed);
        let labels = balanced_labels(categories, per);
        let rows = labels
            .iter()
            .map(|_| (0..3).map(|_| (rand::Rng::random_range(&mut rng, 0..6)) as f64).collect())
            .collect();
        let sample = MiSample { labels, rows, bins };
        let cap = (categories as f64).log2().min((bins as f64).log2());
        for mi in mi_per_neuron(&sample).unwrap() {
            prop_assert!((0.0..=cap + 1e-12).contains(&mi));
        }
    }

    #[test]
    fn bins_are_balanced(values in prop::collection::hash_set(-1_000_000i64..1_000_000, 1..400), k in 2usize..16) {
        let values: Vec<f64> = values.into_iter().map(|v| v as f64 / 7.0).collect();
        let mut counts = vec![0usize; k];
        for b in equal_amount_bins(&values, k) {
            counts[b] += 1;
        }
        let ideal = values.len() as f64 / k as f64;
        for c in counts {
            prop_assert!((c as f64 - ideal).abs() < 1.0);
        }
    }

    #[test]
    fn mi_invariant_under_monotone_maps(
        values in prop::collection::vec(-5.0f64..5.0, 40),
        kind in 0usize..5,
        a in 0.1f64..10.0,
        b in -3.0f64..3.0,
    ) {
        let labels = balanced_labels(2, 20);
        let rows: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
        let mapped: Vec<Vec<f64>> = values.iter().map(|&v| vec![monotone(kind, a, b, v)]).collect();
        let x = mi_per_neuron(&MiSample::new(labels.clone(), rows)).unwrap();
        let y = mi_per_neuron(&MiSample::new(labels, mapped)).unwrap();
        prop_assert!((x[0] - y[0]).abs() <= 1e-9);
    }

    #[test]
    fn stats_match_closed_forms(
        pairs in prop::collection::vec((-20i32..20, -50.0f64..50.0), 3..60),
    ) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64 / 2.0).collect();
        let y: Vec<f64> = pairs.iter().map(|p| (p.1 * 4.0).round() / 4.0).collect();
        prop_assume!(x.iter().any(|v| *v != x[0]) && y.iter().any(|v| *v != y[0]));
        let e = linfit_eval(&x, &y).unwrap();
        let r = naive_pearson(&x, &y);
        prop_assert!((e.r2 - r * r).abs() <= 1e-12);
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let slope = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>()
            / x.iter().map(|a| (a - mx).powi(2)).sum::<f64>();
        let rmse = (x.iter().zip(&y).map(|(a, b)| (b - my - slope * (a - mx)).powi(2)).sum::<f64>() / n).sqrt();
        prop_assert!((e.rmse - rmse).abs() <= 1e-12 * rmse.max(1.0));
        let rho = naive_pearson(&naive_ranks(&x), &naive_ranks(&y));
        prop_assert!((srocc(&x, &y).unwrap().unwrap() - rho).abs() <= 1e-12);
    }

    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-50.0f64..50.0, 1..20), shift in -100.0f64..100.0) {
        let p = softmax(&logits);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let shifted: Vec<f64> = logits.iter().map(|v| v + shift).collect();
        for (a, b) in p.iter().zip(softmax(&shifted)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        for i in 0..logits.len() {
            for j in 0..logits.len() {
                if logits[i] < logits[j] {
                    prop_assert!(p[i] <= p[j]);
                }
            }
        }
    }

    #[test]
    fn grating_spectrum_peaks_at_frequency(f in 1usize..31, phase in 0.0f64..std::f64::consts::TAU, contrast in 0.05f64..1.0) {
        let n = 64;
        let img = render_grating(&GratingSpec::new(contrast, f as f64, 0.0, phase), n, 4, 1).unwrap();
        let row = &img.data()[..n];
        let power = |k: usize| {
            let (mut re, mut im) = (0.0, 0.0);
            for (x, v) in row.iter().enumerate() {
                let a = std::f64::consts::TAU * (k * x) as f64 / n as f64;
                re += v * a.cos();
                im -= v * a.sin();
            }
            re * re + im * im
        };
        let peak = (1..n / 2).max_by(|&a, &b| power(a).total_cmp(&power(b))).unwrap();
        prop_assert_eq!(peak, f);
    }

    #[test]
    fn jitter_within_bounds_and_deterministic(
        pi in 0usize..3,
        ci in 0usize..90,
        seed in any::<u64>(),
        category in 0usize..2,
        hard in any::<bool>(),
    ) {
        let paradigm = [Paradigm::Segmentation, Paradigm::Crowding, Paradigm::Shape][pi];
        let config = &enumerate_configs(paradigm)[ci];
        let category = category.min(paradigm.category_count() - 1);
        let condition = if hard { Condition::Hard } else { Condition::Easy };
        let renderer = PatternRenderer::new(PatternGeometry::with_canvas(112));
        let label = CategoryLabel::new(category, condition);
        let layout = renderer.layout(config, label, seed).unwrap();
        let bound = (config.jitter_amplitude() * 0.5 + 1e-9).floor() as i64;
        prop_assert_eq!(layout.jitter_bound, bound);
        for el in &layout.elements {
            prop_assert!(el.offset.0.abs() <= bound && el.offset.1.abs() <= bound);
        }
        let a = renderer.render(config, label, seed).unwrap();
        let b = renderer.render(config, label, seed).unwrap();
        prop_assert_eq!(a.data(), b.data());
    }

    #[test]
    fn segmentation_easy_and_hard_differ_only_at_target(ci in 0usize..90, seed in any::<u64>(), category in 0usize..2) {
        let config = &enumerate_configs(Paradigm::Segmentation)[ci];
        let renderer = PatternRenderer::new(PatternGeometry::with_canvas(112));
        let easy = renderer.layout(config, CategoryLabel::new(category, Condition::Easy), seed).unwrap();
        let hard = renderer.layout(config, CategoryLabel::new(category, Condition::Hard), seed).unwrap();
        prop_assert_eq!(easy.elements.len(), hard.elements.len());
        let differing: Vec<usize> = easy
            .elements
            .iter()
            .zip(&hard.elements)
            .enumerate()
            .filter(|(_, (e, h))| e != h)
            .map(|(i, _)| i)
            .collect();
        prop_assert_eq!(differing.len(), 1);
        let i = differing[0];
        prop_assert_eq!(easy.elements[i].nominal, hard.elements[i].nominal);
        prop_assert_eq!(easy.elements[i].offset, hard.elements[i].offset);
    }
}

#[test]
fn separable_two_categories_carry_one_bit() {
    let labels = balanced_labels(2, 50);
    let rows = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| vec![l as f64 * 10.0 + i as f64 * 1e-3])
        .collect();
    let mi = mi_per_neuron(&MiSample::new(labels, rows)).unwrap();
    assert!((mi[0] - 1.0).abs() < 1e-12);
}

#[test]
fn ninety_configs_per_paradigm() {
    for p in [Paradigm::Segmentation, Paradigm::Crowding, Paradigm::Shape] {
        assert_eq!(enumerate_configs(p).len(), 90);
    }
}
