//! Acceptance suite: one test per criterion, each printing a single
//! summary line (visible with `--nocapture`).

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sqmap_core::anchors::{build_anchor_set, threshold_k3, AnchorSelectionState, SelectionConfig};
use sqmap_core::circle::{select_circle_anchors, CurveCase};
use sqmap_core::geometry::{
    distance_map, distance_squared_jacobian, distance_squared_map, is_general_position,
    min_singular_value, sqrt_map, Point,
};
use sqmap_core::manifold::SampledManifold;
use sqmap_core::normal_form::{
    build_fold_reduction, build_inclusion_reduction, build_level_fold, chain_jacobian,
    evaluate_chain, verify_fold_form,
};
use sqmap_core::shapes;
use sqmap_core::verify::{injectivity_check, run_full_verification, VerifyConfig};
use sqmap_core::AnchorSet;

fn pass(criterion: usize, name: &str, detail: String) {
    println!("[ACCEPTANCE] criterion {criterion} ({name}): PASS ({detail})");
}

/// Random anchors in [-5,5]^n whose difference vectors are comfortably
/// full rank (smallest singular value bounded away from zero so the
/// conjugating chain stays well conditioned).
fn random_anchors<R: Rng>(l: usize, n: usize, rng: &mut R) -> AnchorSet {
    loop {
        let pts: Vec<Point> = (0..l)
            .map(|_| {
                Point::new((0..n).map(|_| rng.gen_range(-5.0..5.0)).collect()).unwrap()
            })
            .collect();
        let set = AnchorSet::new(pts, 1e-9).unwrap();
        let needed = (l - 1).min(n);
        if set.rank() == needed && min_singular_value(&set.difference_matrix()) > 0.05 {
            return set;
        }
    }
}

#[test]
fn criterion_1_fold_normal_form() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let mut worst = 0.0f64;
    let mut count = 0;
    while count < 200 {
        for l in 2..=6usize {
            for n in l..=6usize {
                if count == 200 {
                    break;
                }
                let anchors = random_anchors(l, n, &mut rng);
                let chain = build_fold_reduction(&anchors).unwrap();
                let report = verify_fold_form(&chain, 1000, 10.0, &mut rng).unwrap();
                let check = &report.checks[0];
                assert!(
                    check.pass,
                    "fold residual {} for l={l} n={n}",
                    check.residual
                );
                worst = worst.max(check.residual);
                count += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(worst < 1e-8, "worst relative residual {worst}");
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    pass(1, "fold normal form", format!("200 instances, worst residual {worst:.3e}, {elapsed:.2?}"));
}

#[test]
fn criterion_2_inclusion_normal_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(1002);
    let mut worst = 0.0f64;
    let mut count = 0;
    while count < 100 {
        for n in 1..=5usize {
            for l in n + 1..=6usize {
                if count == 100 {
                    break;
                }
                let anchors = random_anchors(l, n, &mut rng);
                let chain = build_inclusion_reduction(&anchors).unwrap();
                let report = verify_fold_form(&chain, 1000, 10.0, &mut rng).unwrap();
                let check = &report.checks[0];
                assert!(
                    check.pass,
                    "inclusion residual {} for l={l} n={n}",
                    check.residual
                );
                worst = worst.max(check.residual);
                count += 1;
            }
        }
    }
    assert!(worst < 1e-8, "worst relative residual {worst}");
    pass(2, "inclusion normal form", format!("100 instances, worst residual {worst:.3e}"));
}

/// Anchors sharing their last coordinate, heads in general position.
fn level_anchors<R: Rng>(n: usize, a: f64, rng: &mut R) -> AnchorSet {
    loop {
        let pts: Vec<Point> = (0..n)
            .map(|_| {
                let mut c: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(-5.0..5.0)).collect();
                c.push(a);
                Point::new(c).unwrap()
            })
            .collect();
        let set = AnchorSet::new(pts, 1e-9).unwrap();
        if set.general_position() && min_singular_value(&set.difference_matrix()) > 0.05 {
            return set;
        }
    }
}

#[test]
fn criterion_3_level_fold_determinant() {
    let mut rng = ChaCha8Rng::seed_from_u64(1003);
    let mut worst_on = 0.0f64;
    let mut worst_off = f64::INFINITY;
    for instance in 0..100 {
        let n = 2 + instance % 5;
        let a = rng.gen_range(-3.0..3.0);
        let anchors = level_anchors(n, a, &mut rng);
        let chain = build_level_fold(&anchors).unwrap();
        for sample in 0..100 {
            let mut coords: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let on_level = sample % 2 == 0;
            if on_level {
                coords.push(a);
            } else {
                let offset = rng.gen_range(0.1..1.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                coords.push(a + offset);
            }
            let x = Point::new(coords).unwrap();
            let jac = chain_jacobian(&chain, &x).unwrap();
            // Hadamard bound as the determinant scale.
            let scale: f64 = (0..jac.nrows())
                .map(|r| jac.row(r).norm())
                .product::<f64>()
                .max(1e-300);
            let det = jac.determinant().abs();
            let ratio = det / scale;
            if on_level {
                assert!(ratio < 1e-10, "singular point has |det|/scale = {ratio:.3e}");
                worst_on = worst_on.max(ratio);
            } else {
                assert!(ratio > 1e-3, "regular point has |det|/scale = {ratio:.3e}");
                worst_off = worst_off.min(ratio);
            }
        }
    }
    pass(
        3,
        "level fold determinant",
        format!("singular max {worst_on:.3e}, regular min {worst_off:.3e}"),
    );
}

fn embedding_fixtures() -> Vec<(&'static str, SampledManifold, u64)> {
    vec![
        ("circle", shapes::circle(1000).unwrap(), 41),
        ("ellipse", shapes::ellipse(1.5, 0.8, 1000).unwrap(), 42),
        ("trefoil", shapes::trefoil(2000).unwrap(), 43),
        ("sphere", shapes::sphere(3).unwrap(), 44),
    ]
}

fn run_pipeline(m: &SampledManifold, seed: u64) -> AnchorSelectionState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    build_anchor_set(m, &mut rng, &SelectionConfig::default()).unwrap()
}

#[test]
fn criterion_4_embedding_pipeline() {
    let mut details = Vec::new();
    for (name, m, seed) in embedding_fixtures() {
        let start = Instant::now();
        let state = run_pipeline(&m, seed);
        let report = run_full_verification(&m, &state, &VerifyConfig::default()).unwrap();
        let elapsed = start.elapsed();
        assert!(report.overall, "{name}: {:?}", report.checks);
        for required in ["injectivity", "fold_side", "immersion"] {
            assert!(report.find(required).is_some(), "{name} missing {required}");
        }
        assert!(elapsed.as_secs_f64() < 10.0, "{name} took {elapsed:?}");
        details.push(format!("{name} {elapsed:.2?}"));
    }
    pass(4, "embedding pipeline", details.join(", "));
}

#[test]
fn criterion_5_immersion_pipeline() {
    let m = shapes::figure_eight(400).unwrap();
    let n = m.vertices().len();
    let state = run_pipeline(&m, 45);
    let report = run_full_verification(&m, &state, &VerifyConfig::default()).unwrap();
    assert!(report.find("immersion").unwrap().pass);
    assert!(report.find("normal_crossings").unwrap().pass);
    let inj = report.find("injectivity").unwrap();
    assert!(!inj.pass);
    assert_eq!(inj.witness_indices, vec![0, n / 2]);

    // Exhaustive: the double-point pair is the only colliding pair among
    // vertices separated by at least 3 longest edges of arc length.
    let images: Vec<Vec<f64>> = m
        .vertices()
        .iter()
        .map(|v| {
            distance_squared_map(&state.anchors_original, v)
                .unwrap()
                .coords()
                .to_vec()
        })
        .collect();
    let scale = images
        .iter()
        .flat_map(|y| y.iter().map(|v| v.abs()))
        .fold(1.0f64, f64::max);
    let mut prefix = vec![0.0f64; n + 1];
    for i in 0..n {
        let a = &m.vertices()[i];
        let b = &m.vertices()[(i + 1) % n];
        prefix[i + 1] = prefix[i]
            + ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    }
    let total = prefix[n];
    let cutoff = 3.0 * m.max_edge_length();
    let mut collisions = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let along = (prefix[i] - prefix[j]).abs();
            if along.min(total - along) < cutoff {
                continue;
            }
            let sep: f64 = images[i]
                .iter()
                .zip(&images[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if sep <= 1e-9 * scale {
                collisions.push((i, j));
            }
        }
    }
    assert_eq!(collisions, vec![(0, n / 2)]);
    pass(5, "immersion pipeline", format!("double point pair (0, {})", n / 2));
}

#[test]
fn criterion_6_circle_anchor_selection() {
    let mut rng = ChaCha8Rng::seed_from_u64(1006);
    let polygon_size = rng.gen_range(20..=200);
    let curves: Vec<(&str, SampledManifold)> = vec![
        ("circle", shapes::circle(10000).unwrap()),
        (
            "convex polygon",
            shapes::random_convex_polygon(polygon_size, &mut rng).unwrap(),
        ),
        ("square", shapes::square(10).unwrap()),
        ("star", shapes::star(1.0, 0.4, 6).unwrap()),
    ];
    let config = VerifyConfig::default();
    let mut details = Vec::new();
    for (name, curve) in &curves {
        let result = select_circle_anchors(curve, 720, 1e-9).unwrap();
        let anchors =
            AnchorSet::new(vec![result.p1.clone(), result.p2.clone()], 1e-9).unwrap();
        let inj = injectivity_check(curve, &anchors, &config).unwrap();
        assert!(inj.pass, "{name}: injectivity margin {}", inj.residual);
        if *name == "circle" {
            assert_eq!(result.case, CurveCase::I);
            let n1 = result.frame.apply(&result.p1.as_vector());
            let n2 = result.frame.apply(&result.p2.as_vector());
            let x = 5f64.sqrt() / 6.0;
            assert!((n1[0] - (0.5 - x)).abs() < 1e-3);
            assert!((n2[0] - (0.5 + x)).abs() < 1e-3);
            assert!((n1[1] - 1.0 / 3.0).abs() < 1e-3);
            assert!((n2[1] - 1.0 / 3.0).abs() < 1e-3);
        }
        details.push(format!(
            "{name} case {:?} margin {:.3e}",
            result.case, inj.residual
        ));
    }
    pass(6, "planar circle anchors", details.join(", "));
}

#[test]
fn criterion_7_threshold_arithmetic() {
    let mut fixtures = embedding_fixtures();
    fixtures.push(("figure-eight", shapes::figure_eight(400).unwrap(), 45));
    for (name, m, seed) in fixtures {
        let state = run_pipeline(&m, seed);
        assert!(state.k0 < state.level, "{name}");
        assert!(state.level < state.k3, "{name}");
        // k3 equals its defining minimum bit-for-bit.
        assert_eq!(state.k3, threshold_k3(state.k0, state.k1, state.k2), "{name}");
        let folded_min = (state.k0 - state.level).powi(2) + state.level;
        assert!(folded_min < state.k2, "{name}: {folded_min} vs k2 {}", state.k2);
    }
    pass(7, "threshold arithmetic", "5 pipeline runs".into());
}

#[test]
fn criterion_8_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(1008);
    let mut worst_jac = 0.0f64;
    for _ in 0..10 {
        let n = rng.gen_range(2..=5);
        let l = rng.gen_range(2..=n);
        let anchors = random_anchors(l, n, &mut rng);
        let h = 1e-5;
        for _ in 0..100 {
            let x =
                Point::new((0..n).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap();
            let exact = distance_squared_jacobian(&anchors, &x).unwrap();
            let mut fd = DMatrix::zeros(l, n);
            for c in 0..n {
                let mut fwd = x.coords().to_vec();
                let mut bwd = fwd.clone();
                fwd[c] += h;
                bwd[c] -= h;
                let yf = distance_squared_map(&anchors, &Point::new(fwd).unwrap()).unwrap();
                let yb = distance_squared_map(&anchors, &Point::new(bwd).unwrap()).unwrap();
                for r in 0..l {
                    fd[(r, c)] = (yf[r] - yb[r]) / (2.0 * h);
                }
            }
            let rel = (&fd - &exact).norm() / exact.norm().max(1.0);
            assert!(rel < 1e-6, "jacobian mismatch {rel:.3e}");
            worst_jac = worst_jac.max(rel);
        }
    }

    let anchors = random_anchors(3, 3, &mut rng);
    let mut worst_sqrt = 0.0f64;
    for _ in 0..1000 {
        let x = Point::new((0..3).map(|_| rng.gen_range(-10.0..10.0)).collect()).unwrap();
        let d = distance_map(&anchors, &x).unwrap();
        let composed = sqrt_map(&distance_squared_map(&anchors, &x).unwrap()).unwrap();
        for c in 0..3 {
            let err = (composed[c] - d[c]).abs() / (1.0 + d[c]);
            assert!(err < 1e-12);
            worst_sqrt = worst_sqrt.max(err);
        }
    }
    pass(
        8,
        "oracle equivalence",
        format!("jacobian {worst_jac:.3e}, sqrt compose {worst_sqrt:.3e}"),
    );
}

// Sanity anchors for the suite itself: the hand-checkable chain values.
#[test]
fn spot_check_hand_values() {
    let anchors = AnchorSet::new(
        vec![
            Point::new(vec![0.0, 0.0]).unwrap(),
            Point::new(vec![1.0, 0.0]).unwrap(),
        ],
        1e-9,
    )
    .unwrap();
    let chain = build_fold_reduction(&anchors).unwrap();
    let y = evaluate_chain(&chain, &Point::new(vec![3.0, 2.0]).unwrap()).unwrap();
    assert!((y[0] - 3.0).abs() < 1e-12);
    assert!((y[1] - 4.0).abs() < 1e-12);
}
