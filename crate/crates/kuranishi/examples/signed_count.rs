//! Signed zero count of the planar problem and of its reversal.
use kuranishi::pipeline::{run, PipelineConfig, Stage};

fn main() {
    let (r, _) = run(&PipelineConfig::new("gen:planar", Stage::Vfc));
    let v = r.vfc.expect("count");
    for c in &v.classes {
        let m = &c.members[0];
        println!("{:?} in chart {:?}: sign {:+}, σ_min {:.3}", m.point, m.chart, c.sign, c.margin);
    }
    println!("count = {}", v.count);
}
