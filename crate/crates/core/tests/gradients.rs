//! Finite-difference checks of every primitive on random small shapes.

use dstt::tensor::gradcheck::{check_gradients, GradCheckOptions};
use dstt::tensor::{Conv2dSpec, Conv3dSpec, ConvTranspose2dSpec};
use dstt::{Result, SeededRng, Tensor};
use proptest::prelude::*;

const TOL: f64 = 1e-5;

fn uniform(rng: &mut SeededRng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.uniform(lo, hi)).collect()).unwrap()
}

/// Values with magnitude in [0.1, 1], so no piecewise op sits near its kink.
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

/// Reduces `y` against fixed random weights, so every output entry carries
/// a distinct upstream gradient.
fn project(y: Tensor<f64>, seed: u64) -> Result<Tensor<f64>> {
    let w = uniform(&mut SeededRng::new(seed ^ 0x5eed), y.shape(), -1.0, 1.0);
    Ok(y.mul(&w)?.sum())
}

fn assert_grads(inputs: Vec<(&str, Tensor<f64>)>, seed: u64, f: impl Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>) {
    let named: Vec<(String, Tensor<f64>)> = inputs.into_iter().map(|(n, t)| (n.to_string(), t)).collect();
    let report = check_gradients(&named, |v| project(f(v)?, seed), GradCheckOptions::default()).unwrap();
    assert!(report.checked > 0);
    assert!(report.passes(TOL), "{report:?}");
}

fn shape() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..4, 1..4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn binary_elementwise(shape in shape(), seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let (a, b) = (uniform(&mut rng, &shape, -1.0, 1.0), uniform(&mut rng, &shape, -1.0, 1.0));
        assert_grads(vec![("a", a.clone()), ("b", b.clone())], seed, |v| v[0].add(&v[1]));
        assert_grads(vec![("a", a.clone()), ("b", b.clone())], seed, |v| v[0].sub(&v[1]));
        assert_grads(vec![("a", a), ("b", b)], seed, |v| v[0].mul(&v[1]));
    }

    #[test]
    fn broadcast_over_leading_axes(lead in 1usize..4, shape in shape(), seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let mut full = vec![lead];
        full.extend(&shape);
        let (a, b) = (uniform(&mut rng, &full, -1.0, 1.0), uniform(&mut rng, &shape, -1.0, 1.0));
        assert_grads(vec![("a", a.clone()), ("b", b.clone())], seed, |v| v[0].add(&v[1]));
        assert_grads(vec![("a", a), ("b", b)], seed, |v| v[0].mul(&v[1]));
    }

    #[test]
    fn unary_smooth(shape in shape(), seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let x = uniform(&mut rng, &shape, -2.0, 2.0);
        let pos = uniform(&mut rng, &shape, 0.2, 2.0);
        for f in [Tensor::sigmoid, Tensor::tanh, Tensor::exp, Tensor::softplus, Tensor::log_sigmoid, Tensor::neg] {
            assert_grads(vec![("x", x.clone())], seed, |v| Ok(f(&v[0])));
        }
        assert_grads(vec![("x", pos)], seed, |v| Ok(v[0].log()));
        assert_grads(vec![("x", x.clone())], seed, |v| Ok(v[0].scale(-1.7).add_scalar(0.3)));
    }

    #[test]
    fn unary_piecewise(shape in shape(), seed in any::<u64>()) {
        let x = off_zero(&mut SeededRng::new(seed), &shape);
        assert_grads(vec![("x", x.clone())], seed, |v| Ok(v[0].relu()));
        assert_grads(vec![("x", x.clone())], seed, |v| Ok(v[0].leaky_relu(0.2)));
        assert_grads(vec![("x", x.clone())], seed, |v| Ok(v[0].abs()));
        assert_grads(vec![("x", x)], seed, |v| Ok(v[0].abs_sum()));
    }

    #[test]
    fn reductions_and_softmax(shape in shape(), seed in any::<u64>()) {
        let x = uniform(&mut SeededRng::new(seed), &shape, -2.0, 2.0);
        assert_grads(vec![("x", x.clone())], seed, |v| Ok(v[0].sum()));
        assert_grads(vec![("x", x.clone())], seed, |v| Ok(v[0].mean()));
        assert_grads(vec![("x", x)], seed, |v| v[0].softmax());
    }

    #[test]
    fn layout_ops(a in 1usize..4, b in 1usize..4, c in 1usize..4, seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let x = uniform(&mut rng, &[a, b, c], -1.0, 1.0);
        let y = uniform(&mut rng, &[a, 2, c], -1.0, 1.0);
        assert_grads(vec![("x", x.clone())], seed, |v| v[0].reshape(&[a * b, c]));
        assert_grads(vec![("x", x.clone())], seed, |v| v[0].permute(&[2, 0, 1]));
        assert_grads(vec![("x", x.clone())], seed, |v| v[0].transpose(0, 2));
        assert_grads(vec![("x", x.clone()), ("y", y)], seed, |v| Tensor::concat(&[v[0].clone(), v[1].clone()], 1));
        assert_grads(vec![("x", x)], seed, |v| v[0].narrow(1, b / 2, b - b / 2));
        let wide = uniform(&mut rng, &[a, b, c + 1], -1.0, 1.0);
        assert_grads(vec![("x", wide)], seed, |v| {
            let parts = v[0].split(2, &[1, c])?;
            parts[1].scale(2.0).sum().add(&parts[0].sum())
        });
    }

    #[test]
    fn matmuls(batch in 1usize..3, m in 1usize..4, k in 1usize..4, n in 1usize..4, seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let a = uniform(&mut rng, &[batch, m, k], -1.0, 1.0);
        let b = uniform(&mut rng, &[k, n], -1.0, 1.0);
        let bb = uniform(&mut rng, &[batch, k, n], -1.0, 1.0);
        let bt = uniform(&mut rng, &[batch, n, k], -1.0, 1.0);
        assert_grads(vec![("a", a.clone()), ("b", b)], seed, |v| v[0].matmul(&v[1]));
        assert_grads(vec![("a", a.clone()), ("b", bb)], seed, |v| v[0].matmul(&v[1]));
        assert_grads(vec![("a", a), ("b", bt)], seed, |v| v[0].matmul_nt(&v[1]));
    }

    #[test]
    fn upsample(c in 1usize..3, h in 1usize..4, w in 1usize..4, factor in 1usize..4, seed in any::<u64>()) {
        let x = uniform(&mut SeededRng::new(seed), &[1, c, h, w], -1.0, 1.0);
        assert_grads(vec![("x", x)], seed, |v| v[0].upsample_nearest2d(factor));
    }

    #[test]
    fn conv2d_grouped(
        groups in 1usize..3,
        per_in in 1usize..3,
        per_out in 1usize..3,
        size in 3usize..7,
        k in prop::sample::select(vec![1usize, 3]),
        stride in 1usize..3,
        seed in any::<u64>(),
    ) {
        let mut rng = SeededRng::new(seed);
        let (cin, cout) = (groups * per_in, groups * per_out);
        let x = uniform(&mut rng, &[2, cin, size, size + 1], -1.0, 1.0);
        let w = uniform(&mut rng, &[cout, per_in, k, k], -1.0, 1.0);
        let b = uniform(&mut rng, &[cout], -1.0, 1.0);
        let spec = Conv2dSpec::new(stride, k / 2).groups(groups);
        assert_grads(vec![("x", x), ("w", w), ("b", b)], seed, |v| v[0].conv2d(&v[1], Some(&v[2]), spec));
    }

    #[test]
    fn conv3d(cin in 1usize..3, cout in 1usize..3, t in 1usize..4, size in 3usize..6, seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let x = uniform(&mut rng, &[1, cin, t, size, size], -1.0, 1.0);
        let w = uniform(&mut rng, &[cout, cin, 3, 3, 3], -1.0, 1.0);
        let b = uniform(&mut rng, &[cout], -1.0, 1.0);
        let spec = Conv3dSpec { stride: [1, 2, 2], padding: [1, 1, 1] };
        assert_grads(vec![("x", x), ("w", w), ("b", b)], seed, |v| v[0].conv3d(&v[1], Some(&v[2]), spec));
    }

    #[test]
    fn conv_transpose2d(cin in 1usize..3, cout in 1usize..3, size in 2usize..5, stride in 1usize..4, seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let x = uniform(&mut rng, &[1, cin, size, size], -1.0, 1.0);
        let w = uniform(&mut rng, &[cin, cout, 3, 3], -1.0, 1.0);
        let b = uniform(&mut rng, &[cout], -1.0, 1.0);
        let spec = ConvTranspose2dSpec { stride, padding: 1, output_padding: stride - 1 };
        assert_grads(vec![("x", x), ("w", w), ("b", b)], seed, |v| v[0].conv_transpose2d(&v[1], Some(&v[2]), spec));
    }
}
