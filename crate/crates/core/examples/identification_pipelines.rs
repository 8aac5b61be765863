use triproxy::fixtures::{fixture, Flavor};
use triproxy::pipelines::{estimands, identify, PipelineOptions};

fn main() -> triproxy::Result<()> {
    for figure in ["fig2a", "fig3a", "fig4a", "fig5b"] {
        let fx = fixture(figure, 2, Flavor::Generic, 0)?;
        let design = fx.design.expect("builtin figure with a design");
        let joint = fx.observed_joint()?;
        let m = identify(design, &joint, &PipelineOptions::new(2))?;
        let r = estimands(&m)?;
        let truth = fx.oracle()?;
        println!(
            "{figure} {design:?}: ATE {:.6} (oracle {:.6}), ATT {:?}",
            r.ate.unwrap_or(f64::NAN),
            truth.ate,
            r.att
        );
        for q in &r.qte {
            println!("  QTE({}) = {}", q.tau, q.effect);
        }
    }
    Ok(())
}
