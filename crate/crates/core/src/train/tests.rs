use super::*;
use crate::geometry::Vec3;
use crate::model::SimulatorConfig;
use crate::oracle::{generate_sequence, SceneConfig};
use crate::tensor::gradcheck;

fn scene(frames: usize) -> Sequence {
    let mut cfg = SceneConfig::default();
    cfg.frames = frames;
    cfg.body_samples = 40;
    generate_sequence(&cfg).unwrap()
}

fn params() -> ModelParams {
    ModelParams::init(&SimulatorConfig {
        hidden: 8,
        ..SimulatorConfig::desk()
    })
    .unwrap()
}

#[test]
fn perfect_prediction_has_zero_fit_losses() {
    let seq = scene(4);
    let setup = GarmentSetup::new(&seq, &params().config).unwrap();
    let truth = setup.garment_track(&seq)[2].clone();
    let g = Graph::new();
    let x = g.param(losses::points_tensor(&truth));
    assert!(loss_mse(x, &truth, &setup).unwrap().item().abs() < 1e-24);
    assert!(loss_normal(x, &truth, &setup).unwrap().item().abs() < 1e-24);
}

#[test]
fn body_penalty_hand_value() {
    // One vertex 0.5 margin inside the offset surface of a single sample.
    let g = Graph::new();
    let x = g.param(losses::points_tensor(&[Vec3::new(0.0, 0.0, 0.5)]));
    let l = loss_body_collision(x, &[Vec3::ZERO], &[Vec3::Z], 1.0).unwrap();
    assert!((l.item() - 0.25).abs() < 1e-15);
    let grad = g.backward(l).unwrap().get(x);
    assert!((grad.data()[2] + 1.0).abs() < 1e-15);
    let far = g.constant(losses::points_tensor(&[Vec3::new(0.0, 0.0, 2.0)]));
    assert_eq!(loss_body_collision(far, &[Vec3::ZERO], &[Vec3::Z], 1.0).unwrap().item(), 0.0);
}

#[test]
fn penalty_averages_over_active_points() {
    let g = Graph::new();
    let pts = [Vec3::new(0.0, 0.0, 0.5), Vec3::new(0.0, 0.0, 0.0), Vec3::new(5.0, 0.0, 9.0)];
    let anchors = [Vec3::ZERO, Vec3::new(5.0, 0.0, 0.0)];
    let x = g.constant(losses::points_tensor(&pts));
    let l = loss_body_collision(x, &anchors, &[Vec3::Z, Vec3::Z], 1.0).unwrap();
    assert!((l.item() - (0.25 + 1.0) / 2.0).abs() < 1e-15);
}

#[test]
fn differentiable_normals_match_reference() {
    let seq = scene(6);
    let topo = &seq.layers[1].topology;
    let pos = &seq.frames[5].garments[1];
    let g = Graph::new();
    let n = normals_var(g.constant(losses::points_tensor(pos)), topo).unwrap().value();
    let reference = crate::geometry::vertex_normals(topo, pos).normals;
    for (i, r) in reference.iter().enumerate() {
        assert!((Vec3::new(n.get(i, 0), n.get(i, 1), n.get(i, 2)) - *r).norm() < 1e-12);
    }
}

#[test]
fn loss_gradcheck_on_positions() {
    let seq = scene(5);
    let setup = GarmentSetup::new(&seq, &params().config).unwrap();
    let track = setup.garment_track(&seq);
    let f = &seq.frames[4];
    // Perturb so collision terms are active.
    let mut pred = track[4].clone();
    for (i, p) in pred.iter_mut().enumerate() {
        p.z -= 0.01 * ((i % 7) as f64 - 3.0);
    }
    let cfg = LossConfig::default();
    let err = gradcheck(
        |_, v| Ok(total_loss(v[0], &track[4], &f.body_positions, &f.body_normals, &setup, &cfg, 0.02)?.0),
        &[losses::points_tensor(&pred)],
        1e-6,
    )
    .unwrap();
    assert!(err < 1e-4, "{err}");
}

#[test]
fn training_is_deterministic_and_reduces_loss() {
    let seq = scene(10);
    let config = TrainConfig {
        learning_rate: 1e-3,
        max_steps: Some(40),
        rollout_noise_steps: 1,
        ..TrainConfig::default()
    };
    let run = || {
        let mut tr = Trainer::new(params(), config.clone());
        let data = [TrainingSequence::new(&seq, &tr.params, &config.loss).unwrap()];
        let before = tr.evaluate(&data).unwrap().total;
        let log = tr.train(&data, |_| {}).unwrap();
        let after = tr.evaluate(&data).unwrap().total;
        (tr.params.store.clone(), log, before, after)
    };
    let (a, la, before, after) = run();
    let (b, lb, _, _) = run();
    assert_eq!(a, b);
    assert_eq!(la, lb);
    assert_eq!(la.len(), 40);
    assert!(after < before, "{before} -> {after}");
}

#[test]
fn full_step_gradcheck_on_tiny_scene() {
    let seq = generate_sequence(&SceneConfig::tiny()).unwrap();
    for ret in [true, false] {
        let mut p = ModelParams::init(&SimulatorConfig {
            hidden: 6,
            layers: 1,
            rotation_equivalent: ret,
            ..SimulatorConfig::desk()
        })
        .unwrap();
        // Zero biases put ReLUs exactly on their kink.
        jitter_params(&mut p, 0.05, 3);
        let report = gradcheck_one_step(&p, &seq, 4, &LossConfig::default(), 1e-5).unwrap();
        assert_eq!(report.len(), p.store.len());
        for (name, err) in &report {
            assert!(*err < 1e-4, "{name}: {err}");
        }
    }
}
