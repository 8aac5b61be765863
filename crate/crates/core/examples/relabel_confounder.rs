use triproxy::fixtures::{fixture, Flavor};
use triproxy::pipelines::{identify, PipelineOptions};
use triproxy::relabel::{confounder_means, relabel, RelabelRule};

fn main() -> triproxy::Result<()> {
    let fx = fixture("fig2a", 3, Flavor::UnbiasedZ, 2)?;
    let m = identify(fx.design.unwrap(), &fx.observed_joint()?, &PipelineOptions::new(3))?;

    let unbiased: RelabelRule = "mean-unbiased".parse()?;
    let labeled = relabel(&m, &unbiased, &[])?;
    println!("recovered confounder values {:?}", labeled.values);
    println!("CATE by value {:?}", labeled.cate()?);
    println!("E[Y(x) | W=w] {:?}", confounder_means(&labeled.base)?);

    let fx = fixture("fig2a", 3, Flavor::MonotoneZ, 2)?;
    let m = identify(fx.design.unwrap(), &fx.observed_joint()?, &PipelineOptions::new(3))?;
    let monotone: RelabelRule = "mean-monotone".parse()?;
    let labeled = relabel(&m, &monotone, &[0.25, 0.5, 0.75])?;
    for (tau, b) in labeled.cate_by_quantile()? {
        println!("CATE at confounder quantile {tau}: {b:.6}");
    }
    Ok(())
}
