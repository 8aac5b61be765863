use triproxy::prob::{ProbTensor, VarSpace};

fn main() -> triproxy::Result<()> {
    let axes = vec![VarSpace::indexed("A", 2), VarSpace::with_levels("B", vec![0.0, 1.0, 2.0])];
    let t = ProbTensor::from_weights(axes, vec![1.0, 2.0, 1.0, 3.0, 1.0, 2.0])?;
    println!("total mass {:.3}", t.total_mass());
    println!("f_B = {:?}", t.marginal(&["B"])?.values());
    println!("E[B] = {:.4}", t.mean("B")?);

    let k = t.condition(&["A"])?;
    for a in 0..k.given_configs() {
        println!("f_B|A={a} = {:?}", k.column(a));
    }
    let back = k.kernel_product(&t.marginal(&["A"])?)?;
    println!("round trip error {:.2e}", back.max_abs_diff(&t.permute_axes(&back.axis_names())?)?);
    println!("{}", t.to_json()?);
    Ok(())
}
