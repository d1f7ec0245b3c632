use super::{counter, Element, Tensor};
use crate::error::{Error, Result};

/// Row-major GEMM: `c (m×n) = op(a) @ op(b)` (or `+=` when `accumulate`).
///
/// `a` is stored as `m×k`, or `k×m` when `trans_a`; `b` as `k×n`, or `n×k`
/// when `trans_b`. Records `m·k·n` MACs.
#[allow(clippy::too_many_arguments)]
pub fn gemm<T: Element>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    trans_a: bool,
    b: &[T],
    trans_b: bool,
    c: &mut [T],
    accumulate: bool,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    counter::record((m * k * n) as u64);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c[..m * n].iter_mut().for_each(|v| *v = T::zero());
        }
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { T::one() } else { T::zero() };
    // SAFETY: extents checked above; c is exclusively borrowed.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl<T: Element> Tensor<T> {
    /// `(…, m, k) @ (k, n)` or batched `(…, m, k) @ (…, k, n)`.
    pub fn matmul(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        matmul_impl(self, rhs, false)
    }

    /// `(…, m, k) @ (…, n, k)ᵀ`, i.e. contraction over both last axes.
    pub fn matmul_nt(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        matmul_impl(self, rhs, true)
    }
}

fn matmul_impl<T: Element>(a: &Tensor<T>, b: &Tensor<T>, trans_b: bool) -> Result<Tensor<T>> {
    let (ash, bsh) = (a.shape(), b.shape());
    if ash.len() < 2 || bsh.len() < 2 {
        return Err(Error::shape(format!(
            "matmul needs rank >= 2 operands, got {ash:?} and {bsh:?}"
        )));
    }
    let (m, k) = (ash[ash.len() - 2], ash[ash.len() - 1]);
    let (bk, n) = if trans_b {
        (bsh[bsh.len() - 1], bsh[bsh.len() - 2])
    } else {
        (bsh[bsh.len() - 2], bsh[bsh.len() - 1])
    };
    if k != bk {
        return Err(Error::shape(format!(
            "matmul inner dimensions differ: {ash:?} vs {bsh:?}{}",
            if trans_b { " (rhs transposed)" } else { "" }
        )));
    }
    let batch_dims = &ash[..ash.len() - 2];
    let batch: usize = batch_dims.iter().product();
    let shared = bsh.len() == 2;
    if !shared && &bsh[..bsh.len() - 2] != batch_dims {
        return Err(Error::shape(format!(
            "matmul batch dimensions differ: {ash:?} vs {bsh:?}"
        )));
    }

    let mut out_shape = batch_dims.to_vec();
    out_shape.extend([m, n]);
    let mut out = vec![T::zero(); batch * m * n];
    let (ad, bd) = (a.data_rc(), b.data_rc());
    if shared {
        gemm(batch * m, k, n, &ad, false, &bd, trans_b, &mut out, false);
    } else {
        for i in 0..batch {
            gemm(
                m,
                k,
                n,
                &ad[i * m * k..],
                false,
                &bd[i * k * n..],
                trans_b,
                &mut out[i * m * n..],
                false,
            );
        }
    }

    let (a_rg, b_rg) = (a.requires_grad(), b.requires_grad());
    Ok(Tensor::from_op(out_shape, out, vec![a.clone(), b.clone()], move |g| {
        let ga = a_rg.then(|| {
            let mut ga = vec![T::zero(); batch * m * k];
            if shared {
                // dA = dC · op(B)ᵀ
                gemm(batch * m, n, k, g, false, &bd, !trans_b, &mut ga, false);
            } else {
                for i in 0..batch {
                    gemm(
                        m,
                        n,
                        k,
                        &g[i * m * n..],
                        false,
                        &bd[i * k * n..],
                        !trans_b,
                        &mut ga[i * m * k..],
                        false,
                    );
                }
            }
            ga
        });
        let gb = b_rg.then(|| {
            let mut gb = vec![T::zero(); if shared { k * n } else { batch * k * n }];
            if shared {
                if trans_b {
                    gemm(n, batch * m, k, g, true, &ad, false, &mut gb, false);
                } else {
                    gemm(k, batch * m, n, &ad, true, g, false, &mut gb, false);
                }
            } else {
                for i in 0..batch {
                    let (gi, ai) = (&g[i * m * n..], &ad[i * m * k..]);
                    let gbi = &mut gb[i * k * n..];
                    if trans_b {
                        gemm(n, m, k, gi, true, ai, false, gbi, false);
                    } else {
                        gemm(k, m, n, ai, true, gi, false, gbi, false);
                    }
                }
            }
            gb
        });
        vec![ga, gb]
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    #[test]
    fn matmul_counts_exact_macs() {
        let a = Tensor::<f32>::ones(&[2, 3]);
        let b = Tensor::<f32>::ones(&[3, 4]);
        let (c, macs) = counter::measure(|| a.matmul(&b).unwrap());
        assert_eq!(c.shape(), &[2, 4]);
        assert_eq!(macs, 24);
    }

    #[test]
    fn matmul_matches_naive_loops() {
        let a: Vec<f64> = (0..6).map(|v| v as f64 * 0.5 - 1.0).collect();
        let b: Vec<f64> = (0..12).map(|v| (v as f64).sin()).collect();
        let ta = Tensor::<f64>::from_vec(&[2, 3], a.clone()).unwrap();
        let tb = Tensor::<f64>::from_vec(&[3, 4], b.clone()).unwrap();
        let got = ta.matmul(&tb).unwrap();
        let want = naive(&a, &b, 2, 3, 4);
        for (g, w) in got.data().iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_nt_equals_matmul_with_transposed_rhs() {
        let a = Tensor::<f64>::from_f64(&[2, 2, 3], &(0..12).map(|v| v as f64).collect::<Vec<_>>())
            .unwrap();
        let b = Tensor::<f64>::from_f64(&[2, 4, 3], &(0..24).map(|v| (v as f64).cos()).collect::<Vec<_>>())
            .unwrap();
        let bt = b.permute(&[0, 2, 1]).unwrap();
        let x = a.matmul_nt(&b).unwrap();
        let y = a.matmul(&bt).unwrap();
        assert_eq!(x.shape(), &[2, 2, 4]);
        for (p, q) in x.data().iter().zip(y.data()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_rejects_inner_mismatch() {
        let a = Tensor::<f32>::ones(&[2, 3]);
        let b = Tensor::<f32>::ones(&[4, 2]);
        assert!(matches!(a.matmul(&b), Err(Error::Shape(_))));
    }
}
