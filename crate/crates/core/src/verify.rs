//! Finite-difference verification of every differentiable operation and of
//! the full generator and discriminator, in 64-bit.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::loss::{
    adversarial_loss, discriminator_forward, discriminator_loss, init_discriminator, loss_hole, loss_valid,
    total_generator_loss, DiscriminatorConfig, LossWeights,
};
use crate::model::{attention, generator_forward, init_generator, ModelConfig, ParamStore};
use crate::rng::SeededRng;
use crate::tensor::gradcheck::{check_gradients, GradCheckOptions, GradCheckReport};
use crate::tensor::{Conv2dSpec, Conv3dSpec, ConvTranspose2dSpec, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckConfig {
    pub seed: u64,
    pub eps: f64,
    /// Maximum accepted relative error.
    pub tolerance: f64,
    /// Lower bound on the relative-error denominator.
    pub floor: f64,
    /// Entries sampled per model parameter tensor; 0 checks all of them.
    pub samples_per_tensor: usize,
    pub frames: usize,
    pub model: ModelConfig,
    pub discriminator: DiscriminatorConfig,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            eps: 1e-4,
            tolerance: 1e-5,
            floor: 1e-3,
            samples_per_tensor: 16,
            frames: 2,
            model: ModelConfig {
                hierarchy_layers: 1,
                heads: 2,
                stacking: "ts".into(),
                frame_h: 24,
                frame_w: 24,
                ..ModelConfig::default().with_channels(4)
            },
            discriminator: DiscriminatorConfig { hidden: [4, 4] },
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradcheckOutcome {
    pub name: String,
    pub report: GradCheckReport,
    pub passed: bool,
}

fn uniform(rng: &mut SeededRng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.uniform(lo, hi)).collect()).unwrap()
}

/// Magnitudes in `[0.1, 1]` with random sign, away from the kinks of
/// relu, leaky relu and abs.
fn off_zero(rng: &mut SeededRng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.uniform(0.1, 1.0);
            if rng.below(2) == 0 {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// `Σ y ⊙ r` for a fixed pseudo-random `r`, so every output entry matters.
fn probe(y: &Tensor<f64>) -> Result<Tensor<f64>> {
    let r = uniform(&mut SeededRng::new(0x5eed), y.shape(), -1.0, 1.0);
    Ok(y.mul(&r)?.sum())
}

type Case = (String, Vec<(String, Tensor<f64>)>, Box<dyn Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>>);

fn case(
    name: &str,
    inputs: Vec<(&str, Tensor<f64>)>,
    f: impl Fn(&[Tensor<f64>]) -> Result<Tensor<f64>> + 'static,
) -> Case {
    (
        name.to_string(),
        inputs.into_iter().map(|(n, t)| (n.to_string(), t)).collect(),
        Box::new(f),
    )
}

fn primitive_cases(rng: &mut SeededRng) -> Vec<Case> {
    let pos = uniform(rng, &[3, 4], 0.5, 2.0);
    let kinked = off_zero(rng, &[3, 4]);
    let mut u = |shape: &[usize]| uniform(rng, shape, -1.0, 1.0);
    let (a, b, row) = (u(&[3, 4]), u(&[3, 4]), u(&[4]));
    let (m1, m2, m3) = (u(&[2, 3, 4]), u(&[2, 4, 5]), u(&[4, 5]));
    let (q, k, v) = (u(&[2, 5, 3]), u(&[2, 5, 3]), u(&[2, 5, 3]));
    let (img, w2, b2) = (u(&[2, 4, 7, 6]), u(&[6, 2, 3, 3]), u(&[6]));
    let (vol, w3, b3) = (u(&[1, 2, 3, 6, 6]), u(&[3, 2, 3, 5, 5]), u(&[3]));
    let (small, wt, bt) = (u(&[1, 3, 3, 2]), u(&[3, 2, 7, 7]), u(&[2]));
    let (c1, c2) = (u(&[2, 3]), u(&[2, 2]));
    let logits = u(&[2, 5]).scale(3.0);

    let unary: Vec<(&str, Tensor<f64>, fn(&Tensor<f64>) -> Tensor<f64>)> = vec![
        ("neg", a.clone(), |x| x.neg()),
        ("scale", a.clone(), |x| x.scale(-2.5)),
        ("add_scalar", a.clone(), |x| x.add_scalar(0.75)),
        ("relu", kinked.clone(), |x| x.relu()),
        ("leaky_relu", kinked.clone(), |x| x.leaky_relu(0.2)),
        ("abs", kinked.clone(), |x| x.abs()),
        ("sigmoid", a.scale(3.0), |x| x.sigmoid()),
        ("tanh", a.scale(2.0), |x| x.tanh()),
        ("exp", a.clone(), |x| x.exp()),
        ("log", pos, |x| x.log()),
        ("softplus", a.scale(4.0), |x| x.softplus()),
        ("log_sigmoid", a.scale(4.0), |x| x.log_sigmoid()),
    ];
    let mut cases: Vec<Case> = unary
        .into_iter()
        .map(|(name, x, f)| case(name, vec![("x", x)], move |v| probe(&f(&v[0]))))
        .collect();

    cases.extend([
        case("add", vec![("a", a.clone()), ("b", b.clone())], |v| probe(&v[0].add(&v[1])?)),
        case("sub", vec![("a", a.clone()), ("b", b.clone())], |v| probe(&v[0].sub(&v[1])?)),
        case("mul", vec![("a", a.clone()), ("b", b.clone())], |v| probe(&v[0].mul(&v[1])?)),
        case("add_broadcast", vec![("a", a.clone()), ("row", row.clone())], |v| probe(&v[0].add(&v[1])?)),
        case("mul_broadcast", vec![("a", a.clone()), ("row", row)], |v| probe(&v[0].mul(&v[1])?)),
        case("sum", vec![("x", a.clone())], |v| Ok(v[0].exp().sum())),
        case("mean", vec![("x", a.clone())], |v| Ok(v[0].exp().mean())),
        case("abs_sum", vec![("x", kinked)], |v| Ok(v[0].abs_sum())),
        case("softmax", vec![("x", logits)], |v| probe(&v[0].softmax()?)),
        case("reshape", vec![("x", a.clone())], |v| probe(&v[0].reshape(&[2, 6])?.exp())),
        case("permute", vec![("x", m1.clone())], |v| probe(&v[0].permute(&[2, 0, 1])?.exp())),
        case("transpose", vec![("x", a.clone())], |v| probe(&v[0].transpose(0, 1)?.exp())),
        case("concat", vec![("a", c1), ("b", c2)], |v| probe(&Tensor::concat(&[v[0].clone(), v[1].clone()], 1)?.exp())),
        case("narrow", vec![("x", m1.clone())], |v| probe(&v[0].narrow(2, 1, 2)?.exp())),
        case("upsample_nearest2d", vec![("x", small.clone())], |v| probe(&v[0].upsample_nearest2d(2)?)),
        case("matmul_batched", vec![("a", m1.clone()), ("b", m2)], |v| probe(&v[0].matmul(&v[1])?)),
        case("matmul_shared", vec![("a", m1.clone()), ("b", m3)], |v| probe(&v[0].matmul(&v[1])?)),
        case("matmul_nt", vec![("a", m1.clone()), ("b", u(&[2, 6, 4]))], |v| probe(&v[0].matmul_nt(&v[1])?)),
        case("attention", vec![("q", q), ("k", k), ("v", v)], |v| probe(&attention(&v[0], &v[1], &v[2])?)),
        case(
            "conv2d",
            vec![("x", img.clone()), ("w", u(&[5, 4, 3, 3])), ("b", u(&[5]))],
            |v| probe(&v[0].conv2d(&v[1], Some(&v[2]), Conv2dSpec::new(2, 1))?),
        ),
        case("conv2d_grouped", vec![("x", img), ("w", w2), ("b", b2)], |v| {
            probe(&v[0].conv2d(&v[1], Some(&v[2]), Conv2dSpec::new(1, 1).groups(2))?)
        }),
        case("conv3d", vec![("x", vol), ("w", w3), ("b", b3)], |v| {
            let spec = Conv3dSpec { stride: [1, 2, 2], padding: [1, 2, 2] };
            probe(&v[0].conv3d(&v[1], Some(&v[2]), spec)?)
        }),
        case("conv_transpose2d", vec![("x", small), ("w", wt), ("b", bt)], |v| {
            let spec = ConvTranspose2dSpec { stride: 3, padding: 3, output_padding: 2 };
            probe(&v[0].conv_transpose2d(&v[1], Some(&v[2]), spec)?)
        }),
    ]);

    let (pred, target) = (u(&[2, 3, 4, 4]), u(&[2, 3, 4, 4]));
    let masks = Tensor::from_vec(&[2, 1, 4, 4], (0..32).map(|i| ((i * 7) % 3 == 0) as u8 as f64).collect()).unwrap();
    let (mh, mv) = (masks.clone(), masks);
    let (real, fake) = (u(&[2, 1, 2, 2]).scale(2.0), u(&[2, 1, 2, 2]).scale(2.0));
    cases.extend([
        case("loss_hole", vec![("pred", pred.clone())], move |v| loss_hole(&v[0], &target, &mh)),
        case("loss_valid", vec![("pred", pred)], move |v| {
            let target = uniform(&mut SeededRng::new(3), &[2, 3, 4, 4], -1.0, 1.0);
            loss_valid(&v[0], &target, &mv)
        }),
        case("discriminator_loss", vec![("real", real), ("fake", fake.clone())], |v| discriminator_loss(&v[0], &v[1])),
        case("adversarial_loss", vec![("fake", fake)], |v| Ok(adversarial_loss(&v[0]))),
    ]);
    cases
}

fn store_inputs(store: &ParamStore<f64>) -> (Vec<String>, Vec<(String, Tensor<f64>)>) {
    let names: Vec<String> = store.names().map(str::to_string).collect();
    let inputs = store.iter().map(|(n, t)| (n.to_string(), t.clone())).collect();
    (names, inputs)
}

fn rebuild(names: &[String], values: &[Tensor<f64>]) -> ParamStore<f64> {
    let mut store = ParamStore::new();
    for (n, t) in names.iter().zip(values) {
        store.insert(n.clone(), t.clone());
    }
    store
}

fn jitter_biases(mut store: ParamStore<f64>, rng: &mut SeededRng) -> ParamStore<f64> {
    let biases: Vec<(String, usize)> = store
        .iter()
        .filter(|(n, _)| n.ends_with(".bias"))
        .map(|(n, t)| (n.to_string(), t.numel()))
        .collect();
    for (name, n) in biases {
        let data = (0..n).map(|_| rng.uniform(-0.1, 0.1)).collect();
        store.set_data(&name, data).expect("bias shape is preserved");
    }
    store
}

fn model_cases(cfg: &GradcheckConfig, rng: &mut SeededRng) -> Result<Vec<Case>> {
    let model = cfg.model.clone();
    // random biases move the check away from the exact zeros of a fresh init
    let gen = jitter_biases(init_generator::<f64>(&model, rng)?, rng);
    let disc = jitter_biases(init_discriminator::<f64>(&cfg.discriminator, rng)?, rng);
    let (t, h, w) = (cfg.frames, model.frame_h, model.frame_w);
    let target = uniform(rng, &[t, 3, h, w], -1.0, 1.0);
    let mut plane = vec![0.0; h * w];
    for y in h / 4..h / 2 {
        for x in w / 3..2 * w / 3 {
            plane[y * w + x] = 1.0;
        }
    }
    let masks = Tensor::from_vec(&[t, 1, h, w], plane.iter().copied().cycle().take(t * h * w).collect())?;
    let keep = masks.neg().add_scalar(1.0);
    let corrupted = target.mul(&Tensor::concat(&[keep.clone(), keep.clone(), keep], 1)?)?;

    let (gen_names, gen_inputs) = store_inputs(&gen);
    let (disc_names, disc_inputs) = store_inputs(&disc);
    let weights = LossWeights::default();
    let generator = {
        let (target, masks, corrupted, disc, model) = (target.clone(), masks.clone(), corrupted.clone(), disc.clone(), model.clone());
        case("generator_end_to_end", vec![], move |v| {
            let params = rebuild(&gen_names, v);
            let pred = generator_forward(&corrupted, &masks, &model, &params)?;
            let adv = adversarial_loss(&discriminator_forward(&pred, &disc)?);
            total_generator_loss(&loss_hole(&pred, &target, &masks)?, &loss_valid(&pred, &target, &masks)?, &adv, &weights)
        })
    };
    let discriminator = {
        let pred = generator_forward(&corrupted, &masks, &model, &gen)?;
        case("discriminator_end_to_end", vec![], move |v| {
            let params = rebuild(&disc_names, v);
            discriminator_loss(&discriminator_forward(&target, &params)?, &discriminator_forward(&pred, &params)?)
        })
    };
    let with_inputs = |mut c: Case, inputs: Vec<(String, Tensor<f64>)>| {
        c.1 = inputs;
        c
    };
    Ok(vec![with_inputs(generator, gen_inputs), with_inputs(discriminator, disc_inputs)])
}

/// Runs every check; `on_result` sees each outcome as it completes.
pub fn run_gradcheck_suite(cfg: &GradcheckConfig, mut on_result: impl FnMut(&GradcheckOutcome)) -> Result<Vec<GradcheckOutcome>> {
    cfg.model.validate()?;
    let mut rng = SeededRng::new(cfg.seed);
    let mut cases = primitive_cases(&mut rng);
    let primitives = cases.len();
    cases.extend(model_cases(cfg, &mut rng)?);
    let mut out = Vec::new();
    for (i, (name, inputs, f)) in cases.into_iter().enumerate() {
        let opts = GradCheckOptions {
            eps: cfg.eps,
            floor: cfg.floor,
            max_per_tensor: (i >= primitives && cfg.samples_per_tensor > 0).then_some(cfg.samples_per_tensor),
        };
        let report = check_gradients(&inputs, f, opts)?;
        let outcome = GradcheckOutcome {
            passed: report.passes(cfg.tolerance),
            name,
            report,
        };
        on_result(&outcome);
        out.push(outcome);
    }
    Ok(out)
}
