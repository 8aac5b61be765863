use triproxy::fixtures::{fixture, Flavor};

fn main() -> triproxy::Result<()> {
    let fx = fixture("fig2a", 3, Flavor::Generic, 4)?;
    let model = &fx.model;
    println!("noise configurations {}", model.noise_configurations());

    let o = fx.oracle()?;
    println!("ATE {:.6}  ATT {:.6}  ATU {:.6}", o.ate, o.att, o.atu);
    println!("f_W = {:?}", o.latent_marginal);
    for (w, b) in o.cate.iter().enumerate() {
        println!("CATE(w={w}) = {b:.6}");
    }

    // Clamp X and compare the exact interventional law with a large sample from it.
    let treated = model.intervene(&[("X", 1)])?;
    let exact = treated.observable_joint()?.marginal(&["Y"])?;
    let data = treated.sample(200_000, 1)?;
    let est = triproxy::npsem::empirical_tensor(&data)?.marginal(&["Y"])?;
    println!("f_Y(1) exact {:?}", exact.values());
    println!("f_Y(1) sample {:?}", est.values());
    Ok(())
}
