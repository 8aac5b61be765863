use triproxy::bounds::{bounds, check_rank_invariance};
use triproxy::fixtures::{fixture, Flavor};
use triproxy::pipelines::PipelineOptions;

fn main() -> triproxy::Result<()> {
    for figure in ["fig6a", "fig7a"] {
        let fx = fixture(figure, 2, Flavor::RankInvariant, 3)?;
        println!("{figure}: rank invariant {}", check_rank_invariance(&fx.model)?);
        let r = bounds(fx.design.unwrap(), &fx.observed_joint()?, &PipelineOptions::new(2))?;
        let o = fx.oracle()?;
        println!("  CATE range [{:.6}, {:.6}]", r.s_lower, r.s_upper);
        println!("  ATT in [{:.6}, {:.6}], oracle {:.6}", r.att.lower, r.att.upper, o.att);
        println!("  ATU in [{:.6}, {:.6}], oracle {:.6}", r.atu.lower, r.atu.upper, o.atu);
        println!("  point identified {}", r.point_identified);
    }
    Ok(())
}
