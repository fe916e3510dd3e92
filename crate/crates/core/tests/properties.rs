use anneal_classifier::classifier::{centroid, distance_matrix, loss_value, overlap_matrix, CentroidSet, ClassCentroid, LossKind};
use anneal_classifier::data::Sample;
use anneal_classifier::evolution::{embed_state, grad_loss_wrt_w, objective_value, EvolutionGrid, Objective};
use anneal_classifier::gradcheck::{check_instance, GradCheckConfig};
use anneal_classifier::linalg::QuantumState;
use anneal_classifier::schedule::{AnnealSpec, CoeffSource, EmbeddingMap};
use anneal_classifier::Error;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_state(dim: usize, rng: &mut ChaCha8Rng) -> QuantumState {
    let amps = (0..dim)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    QuantumState::normalized(amps).unwrap()
}

#[test]
fn adjoint_matches_finite_differences_on_random_instances() {
    let cfg = GradCheckConfig {
        instances: 24,
        seed: 11,
        ..GradCheckConfig::default()
    };
    for i in 0..cfg.instances {
        let r = check_instance(&cfg, i).unwrap();
        assert!(r.passed, "instance {i}: {r:?}");
        assert!(r.max_rel_err < 1e-4);
    }
}

#[test]
fn expectation_objective_gradient_matches_finite_differences() {
    let spec = AnnealSpec::new(2, 2, 7, 1.3, CoeffSource::FieldsDataDriven).unwrap();
    let grid = EvolutionGrid::for_spec(&spec);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let w = EmbeddingMap::random(&spec, 3, 0.4, &mut rng);
    let batch: Vec<Sample> = (0..3)
        .map(|k| Sample {
            features: (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            label: k % 2,
        })
        .collect();
    let obs = anneal_classifier::linalg::pauli_chain_op(anneal_classifier::linalg::PauliTerm::ZZ(0, 1), 2).unwrap();
    let objective = Objective::Expectation(obs);
    let exact = anneal_classifier::evolution::grad_objective_wrt_w(&spec, &w, &batch, &grid, &objective).unwrap();
    let fd = anneal_classifier::evolution::fd_gradient_oracle(&spec, &w, &batch, &grid, &objective, 1e-5).unwrap();
    for (a, f) in exact.grad_w.w.iter().zip(&fd) {
        assert!((a - f).abs() < 1e-8 * (1.0 + f.abs()), "{a} vs {f}");
    }
}

#[test]
fn zero_map_gives_zero_loss_and_degenerate_spread() {
    let spec = AnnealSpec::new(2, 3, 10, 2.0, CoeffSource::FieldsFixed).unwrap();
    let grid = EvolutionGrid::for_spec(&spec);
    let w = EmbeddingMap::zeros(&spec, 2);
    let batch: Vec<Sample> = (0..9)
        .map(|k| Sample {
            features: vec![k as f64 * 0.1, 1.0 - k as f64 * 0.2],
            label: k % 3,
        })
        .collect();
    for kind in [LossKind::NegProduct, LossKind::NegSum] {
        let v = objective_value(&spec, &w, &batch, &grid, &Objective::Loss(kind)).unwrap();
        assert!(v.abs() < 1e-12, "{kind}: {v}");
    }
    let two: Vec<Sample> = batch.iter().filter(|s| s.label < 2).cloned().collect();
    let v = objective_value(&spec, &w, &two, &grid, &Objective::Loss(LossKind::BinaryNegDistance)).unwrap();
    assert!(v.abs() < 1e-12);
    assert!(matches!(
        grad_loss_wrt_w(&spec, &w, &batch, &grid, LossKind::NegMinOverSpread),
        Err(Error::DegenerateSpread)
    ));
}

#[test]
fn embedded_states_have_unit_norm() {
    let spec = AnnealSpec::new(3, 3, 10, 2.0, CoeffSource::FieldsDataDriven).unwrap();
    let grid = EvolutionGrid::for_spec(&spec);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let w = EmbeddingMap::random(&spec, 2, 1.0, &mut rng);
    for _ in 0..20 {
        let x = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        let psi = embed_state(&spec, &w, &x, &grid).unwrap();
        assert!((psi.norm() - 1.0).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn global_phases_change_nothing(seed in 0u64..100_000, phases in prop::collection::vec(0.0f64..6.283, 6)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let states: Vec<QuantumState> = (0..6).map(|_| random_state(4, &mut rng)).collect();
        let rotated: Vec<QuantumState> = states.iter().zip(&phases).map(|(s, &p)| s.with_global_phase(p)).collect();
        let group = |v: &[QuantumState]| vec![v[..2].to_vec(), v[2..4].to_vec(), v[4..].to_vec()];
        let cents = |g: &[Vec<QuantumState>]| g.iter().enumerate().map(|(l, s)| centroid(s, l).unwrap()).collect::<Vec<_>>();
        let (ga, gb) = (group(&states), group(&rotated));
        let (ca, cb) = (cents(&ga), cents(&gb));
        for (a, b) in ca.iter().zip(&cb) {
            prop_assert!(a.matrix.max_abs_diff(&b.matrix) < 1e-14);
        }
        for kind in [LossKind::NegProduct, LossKind::NegSum, LossKind::NegMinOverSpread] {
            let la = loss_value(&ca, &ga, kind).unwrap();
            let lb = loss_value(&cb, &gb, kind).unwrap();
            prop_assert!((la - lb).abs() < 1e-13);
        }
        let oa = overlap_matrix(&states).unwrap();
        let ob = overlap_matrix(&rotated).unwrap();
        for (x, y) in oa.values.iter().zip(&ob.values) {
            prop_assert!((x - y).abs() < 1e-14);
        }
        let set_a = CentroidSet::new(ca).unwrap();
        let set_b = CentroidSet::new(cb).unwrap();
        for (s, r) in states.iter().zip(&rotated) {
            prop_assert_eq!(set_a.nearest(s.amplitudes()), set_b.nearest(r.amplitudes()));
        }
    }

    #[test]
    fn centroids_are_permutation_invariant_and_valid(seed in 0u64..100_000, k in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let states: Vec<QuantumState> = (0..k).map(|_| random_state(8, &mut rng)).collect();
        let mut shuffled = states.clone();
        shuffled.reverse();
        let a = centroid(&states, 0).unwrap();
        let b = centroid(&shuffled, 0).unwrap();
        prop_assert!(a.matrix.max_abs_diff(&b.matrix) < 1e-12);
        let (h, t, min_eig) = a.invariant_defects().unwrap();
        prop_assert!(h < 1e-10 && t < 1e-10 && min_eig > -1e-10);
    }

    #[test]
    fn overlap_matrices_are_symmetric_with_unit_diagonal(seed in 0u64..100_000, k in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let states: Vec<QuantumState> = (0..k).map(|_| random_state(4, &mut rng)).collect();
        let m = overlap_matrix(&states).unwrap();
        for a in 0..k {
            prop_assert!((m.get(a, a) - 1.0).abs() < 1e-10);
            for b in 0..k {
                prop_assert_eq!(m.get(a, b), m.get(b, a));
                prop_assert!((0.0..=1.0 + 1e-10).contains(&m.get(a, b)));
            }
        }
    }

    #[test]
    fn prediction_follows_relabeling(seed in 0u64..100_000, offset in 1usize..50) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centres: Vec<QuantumState> = (0..3).map(|_| random_state(4, &mut rng)).collect();
        let make = |labels: [usize; 3]| {
            CentroidSet::new(centres.iter().zip(labels).map(|(s, l)| ClassCentroid { label: l, matrix: s.density_matrix(), count: 1 }).collect()).unwrap()
        };
        let base = make([0, 1, 2]);
        // order-preserving relabeling keeps tie-breaks consistent
        let moved = make([offset, offset + 1, offset + 2]);
        for _ in 0..10 {
            let psi = random_state(4, &mut rng);
            prop_assert_eq!(base.nearest(psi.amplitudes()) + offset, moved.nearest(psi.amplitudes()));
        }
        let d = distance_matrix(base.centroids()).unwrap();
        for i in 0..3 {
            prop_assert_eq!(d[i][i], 0.0);
        }
    }
}
