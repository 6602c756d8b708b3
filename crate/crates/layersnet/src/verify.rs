//! Property suite behind the `verify` and `gradcheck` commands.

use layersnet_core::geometry::{
    quat_to_matrix, world_space_edges, EdgeKind, EdgeSet, Quaternion, RotationMatrix, Senders, Vec3,
};
use layersnet_core::math;
use layersnet_core::model::{
    apply_lift, edge_feature, edge_feature_centered, edge_feature_var, lift_rotation, mat_vec, predict,
    semi_orthogonalize, semi_orthogonalize_var, GarmentSetup, ModelParams, SimulatorConfig, StepInput,
};
use layersnet_core::oracle::{generate_sequence, step_oracle, ClothLayer, SceneConfig, StepOptions, WindState};
use layersnet_core::sequence::Sequence;
use layersnet_core::tensor::{gradcheck, Graph, Tensor, Var};
use layersnet_core::train::{gradcheck_one_step, jitter_params, LossConfig};
use layersnet_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::rc::Rc;

/// One measured property against its tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
        }
    }

    pub fn passed(&self) -> bool {
        self.value < self.tolerance
    }
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn random_rotation(rng: &mut ChaCha8Rng) -> RotationMatrix {
    quat_to_matrix(Quaternion::random(rng)).expect("unit quaternion")
}

fn random_lift(rng: &mut ChaCha8Rng, d: usize) -> Tensor {
    let raw = Tensor::new(&[d, 3], (0..3 * d).map(|_| math::gaussian(rng)).collect()).unwrap();
    semi_orthogonalize(&raw).expect("full rank")
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

/// Worst errors over `trials` random lifts, rotations and features:
/// edge-feature equivariance, attention-weight invariance, homomorphism of
/// the lift, and orthogonality of the lifted matrix.
pub fn rotation_properties(trials: usize, seed: u64) -> [Check; 4] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = [0.0f64; 4];
    for trial in 0..trials {
        let d = 3 + trial % 14;
        let w = random_lift(&mut rng, d);
        let q = random_rotation(&mut rng);
        let lq = lift_rotation(&q, &w).unwrap();
        let (r, s) = (random_vec(&mut rng, d), random_vec(&mut rng, d));
        let lhs = edge_feature(&mat_vec(&lq, &r), &mat_vec(&lq, &s)).value;
        let rhs = mat_vec(&lq, &edge_feature(&r, &s).value);
        worst[0] = worst[0].max(max_abs_diff(&lhs, &rhs));

        let query = random_vec(&mut rng, d);
        let senders: Vec<Vec<f64>> = (0..4).map(|_| random_vec(&mut rng, d)).collect();
        let logits = |q: &[f64], r: &[f64], ss: &[Vec<f64>]| -> Vec<f64> {
            ss.iter()
                .map(|s| q.iter().zip(edge_feature(r, s).value).map(|(a, b)| a * b).sum())
                .collect()
        };
        let base = softmax(&logits(&query, &r, &senders));
        let turned: Vec<Vec<f64>> = senders.iter().map(|s| mat_vec(&lq, s)).collect();
        let moved = softmax(&logits(&mat_vec(&lq, &query), &mat_vec(&lq, &r), &turned));
        worst[1] = worst[1].max(max_abs_diff(&base, &moved));

        let p = random_rotation(&mut rng);
        let composed = lift_rotation(&(q * p), &w).unwrap();
        let product = lq.matmul(&lift_rotation(&p, &w).unwrap()).unwrap();
        worst[2] = worst[2].max(composed.max_abs_diff(&product));
        worst[3] = worst[3].max(lq.transpose().matmul(&lq).unwrap().max_abs_diff(&Tensor::identity(d)));
    }
    [
        Check::new("edge feature equivariance", worst[0], 1e-9),
        Check::new("attention weight invariance", worst[1], 1e-9),
        Check::new("lift homomorphism", worst[2], 1e-9),
        Check::new("lift orthogonality", worst[3], 1e-9),
    ]
}

/// Largest relative gap between the centered and simplified edge features.
pub fn edge_feature_forms(trials: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for trial in 0..trials {
        let d = 1 + trial % 32;
        let scale = 10f64.powi(rng.gen_range(-3..3));
        let r: Vec<f64> = random_vec(&mut rng, d).iter().map(|v| v * scale).collect();
        let s: Vec<f64> = random_vec(&mut rng, d).iter().map(|v| v * scale).collect();
        let a = edge_feature(&r, &s).value;
        let b = edge_feature_centered(&r, &s);
        for (x, y) in a.iter().zip(&b) {
            worst = worst.max((x - y).abs() / x.abs().max(1.0));
        }
    }
    Check::new("edge feature forms agree", worst, 1e-12)
}


fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    // Keep magnitudes away from zero so ReLU kinks and norm floors are not hit.
    Tensor::new(
        shape,
        (0..n)
            .map(|_| {
                let v: f64 = rng.gen_range(0.2..1.0);
                if rng.gen() {
                    v
                } else {
                    -v
                }
            })
            .collect(),
    )
    .unwrap()
}

/// Gradchecks of each differentiable primitive on random inputs, reduced
/// to a scalar through a fixed random projection.
pub fn primitive_gradchecks(seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rots: Rc<[RotationMatrix]> = (0..4).map(|_| random_rotation(&mut rng)).collect();
    let idx: Rc<[u32]> = vec![2, 0, 3, 3, 1].into();
    let seg: Rc<[u32]> = vec![0, 1, 0, 2, 1].into();
    let mut out = Vec::new();
    let cases: Vec<(&str, Vec<Vec<usize>>)> = vec![
        ("matmul", vec![vec![4, 3], vec![3, 5]]),
        ("add", vec![vec![4, 3], vec![4, 3]]),
        ("sub", vec![vec![4, 3], vec![4, 3]]),
        ("mul", vec![vec![4, 3], vec![4, 3]]),
        ("scale", vec![vec![4, 3]]),
        ("relu", vec![vec![4, 3]]),
        ("softmax", vec![vec![4, 3]]),
        ("segment_softmax", vec![vec![5, 1]]),
        ("l2norm", vec![vec![4, 3]]),
        ("mse", vec![vec![4, 3], vec![4, 3]]),
        ("concat", vec![vec![4, 3], vec![2, 3]]),
        ("slice", vec![vec![4, 3]]),
        ("gather", vec![vec![4, 3]]),
        ("scatter_add", vec![vec![5, 3]]),
        ("mul_rows", vec![vec![4, 3], vec![4, 1]]),
        ("div_rows", vec![vec![4, 3], vec![4, 1]]),
        ("transpose", vec![vec![4, 3]]),
        ("broadcast_rows", vec![vec![3]]),
        ("rotate_rows", vec![vec![4, 3]]),
        ("cross_rows", vec![vec![4, 3], vec![4, 3]]),
        ("sum_cols", vec![vec![4, 3]]),
        ("mean", vec![vec![4, 3]]),
        ("edge_feature", vec![vec![4, 6], vec![4, 6]]),
        ("semi_orthogonalize", vec![vec![6, 3]]),
        ("apply_lift", vec![vec![4, 6], vec![6, 3]]),
    ];
    for (name, shapes) in cases {
        let inputs: Vec<Tensor> = shapes.iter().map(|s| rand_tensor(&mut rng, s)).collect();
        let (idx, seg, rots) = (idx.clone(), seg.clone(), rots.clone());
        let err = gradcheck(
            move |g: &Graph, v: &[Var<'_>]| {
                let y = match name {
                    "matmul" => v[0].matmul(v[1])?,
                    "add" => v[0].add(v[1])?,
                    "sub" => v[0].sub(v[1])?,
                    "mul" => v[0].mul(v[1])?,
                    "scale" => v[0].scale(-1.7),
                    "relu" => v[0].relu(),
                    "softmax" => v[0].softmax(1)?,
                    "segment_softmax" => v[0].segment_softmax(seg.clone())?,
                    "l2norm" => v[0].l2norm(1e-12),
                    "mse" => v[0].mse(v[1])?,
                    "concat" => Var::concat(&[v[0], v[1]], 0)?,
                    "slice" => v[0].slice(0, 1, 2)?,
                    "gather" => v[0].gather(idx.clone())?,
                    "scatter_add" => v[0].scatter_add(idx.clone(), 4)?,
                    "mul_rows" => v[0].mul_rows(v[1])?,
                    "div_rows" => v[0].div_rows(v[1])?,
                    "transpose" => v[0].transpose(),
                    "broadcast_rows" => v[0].broadcast_rows(3),
                    "rotate_rows" => v[0].rotate_rows(rots.clone(), true)?,
                    "cross_rows" => v[0].cross_rows(v[1])?,
                    "sum_cols" => v[0].sum_cols(),
                    "mean" => v[0].mean(),
                    "edge_feature" => edge_feature_var(v[0], v[1])?,
                    "semi_orthogonalize" => semi_orthogonalize_var(v[0])?,
                    "apply_lift" => apply_lift(v[0], semi_orthogonalize_var(v[1])?, &rots, false)?,
                    _ => unreachable!(),
                };
                // Fixed pseudo-random projection to a scalar.
                let n = y.with_value(|t| t.len());
                let shape = y.shape();
                let weights: Vec<f64> = (0..n).map(|k| ((k * 7919 % 17) as f64 - 8.0) / 8.0 + 0.05).collect();
                let w = g.constant(Tensor::new(&shape, weights)?);
                Ok(y.mul(w)?.sum())
            },
            &inputs,
            1e-6,
        )?;
        out.push(Check::new(format!("gradcheck {name}"), err, 1e-4));
    }
    Ok(out)
}

/// Model used by the full-step gradcheck: one attention layer, width 6,
/// parameters jittered off the ReLU kinks of a zero-bias initialization.
pub fn gradcheck_model(seed: u64, rotation_equivalent: bool) -> Result<ModelParams> {
    let mut p = ModelParams::init(&SimulatorConfig {
        hidden: 6,
        layers: 1,
        rotation_equivalent,
        seed,
        ..SimulatorConfig::desk()
    })?;
    jitter_params(&mut p, 0.05, seed.wrapping_add(1));
    Ok(p)
}

/// Per-block gradcheck of the full one-step loss on two one-patch layers
/// over four body samples.
pub fn full_step_gradcheck(seed: u64, rotation_equivalent: bool) -> Result<Vec<Check>> {
    let seq = generate_sequence(&SceneConfig {
        seed,
        ..SceneConfig::tiny()
    })?;
    let p = gradcheck_model(seed, rotation_equivalent)?;
    let report = gradcheck_one_step(&p, &seq, 4, &LossConfig::default(), 1e-5)?;
    Ok(report
        .into_iter()
        .map(|(name, err)| Check::new(format!("gradcheck step {name}"), err, 1e-4))
        .collect())
}

/// Largest deviation of the cloth's center of mass from exact discrete
/// ballistic motion over `steps` collision-free steps.
pub fn oracle_ballistic(steps: usize, seed: u64) -> Result<Check> {
    let cfg = SceneConfig {
        seed,
        ..SceneConfig::default()
    };
    let mut layers: Vec<ClothLayer> = layersnet_core::oracle::initial_layers(&cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v0 = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.0..2.0));
    for l in &mut layers {
        // Stretch the cloth so springs are active, and add a common velocity.
        for (i, p) in l.positions.iter_mut().enumerate() {
            *p = *p * 1.1 + Vec3::new(0.0, 0.0, 0.003 * (i % 5) as f64);
        }
        for v in &mut l.velocities {
            *v = v0;
        }
    }
    let opts = StepOptions {
        gravity: cfg.gravity,
        damping: 0.0,
        body_thickness: cfg.thickness(),
        layer_thickness: cfg.thickness(),
        layer_search_radius: 0.1,
        collisions: false,
    };
    let dt = cfg.dt / cfg.substeps as f64;
    let com0: Vec<Vec3> = layers.iter().map(|l| l.center_of_mass()).collect();
    let mut worst: f64 = 0.0;
    for n in 1..=steps {
        step_oracle(&mut layers, None, &WindState::CALM, &opts, dt)?;
        let k = n as f64;
        for (l, c0) in layers.iter().zip(&com0) {
            // Semi-implicit Euler: x_n = x_0 + n v_0 dt + n (n + 1) / 2 g dt^2.
            let exact = *c0 + v0 * (k * dt) + cfg.gravity * (0.5 * k * (k + 1.0) * dt * dt);
            worst = worst.max((l.center_of_mass() - exact).max_abs());
        }
    }
    Ok(Check::new("oracle ballistic center of mass", worst, 1e-9))
}

/// Largest penetration depth below the body surface over a generated sequence.
pub fn oracle_penetration(seq: &Sequence) -> Check {
    let mut deepest: f64 = 0.0;
    if let Some(body) = &seq.collider {
        for (t, f) in seq.frames.iter().enumerate() {
            let pose = body.motion.pose(t as f64 * seq.dt);
            for p in f.garments.iter().flatten() {
                if let Some((d, _)) = body.signed_distance(&pose, *p) {
                    deepest = deepest.max(-d);
                }
            }
        }
    }
    Check::new("oracle body penetration depth", deepest, 1e-9)
}

/// Number of frames that differ between two generations from one seed.
pub fn oracle_determinism(cfg: &SceneConfig) -> Result<Check> {
    let a = generate_sequence(cfg)?;
    let b = generate_sequence(cfg)?;
    let bits = |s: &Sequence| -> Vec<u64> {
        s.frames
            .iter()
            .flat_map(|f| f.garments.iter().flatten().chain(&f.body_positions).chain(&f.body_normals))
            .flat_map(|p| p.to_array().map(f64::to_bits))
            .collect()
    };
    let differing = bits(&a).iter().zip(bits(&b).iter()).filter(|(x, y)| x != y).count();
    let len_gap = bits(&a).len().abs_diff(bits(&b).len());
    Ok(Check::new("oracle regeneration differing values", (differing + len_gap) as f64, 0.5))
}

/// Spatial-hash world edges against an all-pairs scan over random point sets.
pub fn world_edges_vs_scan(configs: usize, n: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = 0usize;
    for c in 0..configs {
        let pts: Vec<Vec3> = (0..n)
            .map(|_| Vec3::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)))
            .collect();
        let radius = 0.02 + 0.2 * c as f64 / configs.max(1) as f64;
        let exclusions = EdgeSet::from_pairs((0..n as u32 / 10).map(|i| (i, i + 1)), EdgeKind::Mesh);
        let fast = world_space_edges(&pts, Senders::Same, radius, &exclusions, EdgeKind::World);
        let mut slow = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && pts[i].distance(pts[j]) < radius && !exclusions.contains(i as u32, j as u32) {
                    slow.push((i as u32, j as u32));
                }
            }
        }
        let fast: Vec<(u32, u32)> = fast.pairs().collect();
        if fast != slow {
            mismatches += 1;
        }
    }
    Check::new("world edges differing from scan", mismatches as f64, 0.5)
}

/// Largest change of predicted per-step displacement when the whole scene
/// is shifted by `(1, 1, 1)`.
pub fn translation_invariance(params: &ModelParams, seq: &Sequence, t: usize) -> Result<Check> {
    let setup = GarmentSetup::new(seq, &params.config)?;
    let shift = Vec3::new(1.0, 1.0, 1.0);
    let mut moved = seq.clone();
    for f in &mut moved.frames {
        for p in f.garments.iter_mut().flatten().chain(f.body_positions.iter_mut()) {
            *p += shift;
        }
    }
    let (ta, tb) = (setup.garment_track(seq), setup.garment_track(&moved));
    let h = params.config.history;
    let a = predict(params, &setup, &StepInput::from_track(&ta, seq, t, h)?)?;
    let b = predict(params, &setup, &StepInput::from_track(&tb, &moved, t, h)?)?;
    let worst = (0..a.len())
        .map(|k| ((a[k] - ta[t][k]) - (b[k] - tb[t][k])).max_abs())
        .fold(0.0, f64::max);
    Ok(Check::new("translation changes displacement", worst, 1e-9))
}

/// The property suite; `quick` shrinks trial counts for interactive use.
pub fn run_suite(quick: bool, seed: u64) -> Result<Vec<Check>> {
    let trials = if quick { 200 } else { 1000 };
    let mut checks = Vec::new();
    checks.extend(rotation_properties(trials, seed));
    checks.push(edge_feature_forms(trials, seed));
    checks.extend(primitive_gradchecks(seed)?);
    for ret in [true, false] {
        checks.extend(full_step_gradcheck(seed, ret)?);
    }
    checks.push(oracle_ballistic(if quick { 200 } else { 1000 }, seed)?);
    let scene = SceneConfig {
        seed,
        frames: if quick { 15 } else { 50 },
        ..SceneConfig::default()
    };
    checks.push(oracle_penetration(&generate_sequence(&scene)?));
    checks.push(oracle_determinism(&SceneConfig { frames: 8, ..scene.clone() })?);
    checks.push(world_edges_vs_scan(if quick { 4 } else { 20 }, if quick { 300 } else { 1000 }, seed));
    let seq = generate_sequence(&SceneConfig { frames: 6, ..scene })?;
    let params = ModelParams::init(&SimulatorConfig {
        seed,
        ..SimulatorConfig::desk()
    })?;
    checks.push(translation_invariance(&params, &seq, 3)?);
    Ok(checks)
}
