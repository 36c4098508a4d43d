use elliptgof::datagen::{ActiveSet, AlternativeSpec, RadialLaw, ShapeStructure};
use elliptgof::robust::HrConfig;
use elliptgof::sim::{emit_table, run_grid, CalibrationScheme, SimDesign, SimMode, TableFormat};

fn main() {
    let mut designs = Vec::new();
    for delta in [0.0, 1.0, 2.0] {
        designs.push(SimDesign {
            n: 60,
            p: 20,
            law: RadialLaw::Gaussian,
            shape: ShapeStructure::Identity,
            alt: AlternativeSpec { active_set: ActiveSet::All, delta },
            reps: 50,
            alpha: 0.05,
            mode: SimMode::Oracle,
            calibration: CalibrationScheme::Analytic,
            seed: 3,
        });
    }
    let _ = (HrConfig::default(),);
    let cells: Vec<_> = run_grid(&designs, 1).unwrap().into_iter().map(|c| c.unwrap()).collect();
    let md = emit_table(&cells, TableFormat::Markdown);
    std::fs::write("/root/crate/crates/elliptgof/tests/data/power_grid_golden.md", &md).unwrap();
    print!("{md}");
}
