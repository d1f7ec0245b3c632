//! Builds a small expression graph, backpropagates, and checks the result
//! against central differences.

use dstt::tensor::gradcheck::{check_gradients, GradCheckOptions};
use dstt::{Result, Tensor};

fn main() -> Result<()> {
    // y = sum(softmax(x @ w) * target)
    let x = Tensor::<f64>::from_f64(&[2, 3], &[0.5, -1.0, 2.0, 0.1, 0.3, -0.7])?.with_requires_grad(true);
    let w = Tensor::<f64>::from_f64(&[3, 2], &[1.0, -0.5, 0.25, 0.75, -1.5, 0.2])?.with_requires_grad(true);
    let target = Tensor::<f64>::from_f64(&[2, 2], &[1.0, 0.0, 0.0, 1.0])?;

    let y = x.matmul(&w)?.softmax()?.mul(&target)?.sum();
    y.backward()?;
    println!("y = {:.6}", y.item()?);
    println!("dy/dx = {:?}", x.grad().unwrap());
    println!("dy/dw = {:?}", w.grad().unwrap());

    let report = check_gradients(
        &[("x".into(), x.detach()), ("w".into(), w.detach())],
        |v| Ok(v[0].matmul(&v[1])?.softmax()?.mul(&target)?.sum()),
        GradCheckOptions::default(),
    )?;
    println!("finite differences: {} entries, max relative error {:.2e}", report.checked, report.max_rel_err);
    Ok(())
}
