//! The jump-boundary (restart) process: a diffusion that jumps back to an
//! initial law mu whenever it hits 0. Its long-run occupation measure is
//! the renewal transform Phi mu, which this example verifies pathwise.

use qsd_lab::grid::{Grid, GridParams};
use qsd_lab::mc::{self, InitialLaw, SimConfig};
use qsd_lab::model::DiffusionSpec;
use qsd_lab::renewal::{self, GridMeasure};

fn main() {
    let spec = DiffusionSpec::bm_with_drift(1.0);
    let grid = Grid::build(&spec, &GridParams::new(30.0, 1000)).unwrap();
    let cfg = SimConfig {
        h: 1e-3,
        horizon: 5e3,
        n_paths: 1,
        seed: 7,
        ..SimConfig::default()
    };

    let (occupation, cycles) =
        mc::jump_boundary_occupation(&grid, InitialLaw::Point(1.0), &cfg).unwrap();
    let dirac = GridMeasure::dirac(&grid, 1.0).unwrap();
    let phi = renewal::renewal_transform(&grid, &dirac).unwrap();
    let d = renewal::kolmogorov_distance(&occupation, &phi);
    println!("restart chain from dirac x=1: {cycles} absorption cycles");
    println!("Kolmogorov distance occupation vs Phi(dirac) = {d:.4}");

    // Restarting from the minimal QSD leaves the occupation at the QSD
    // itself: QSDs are the fixed points of Phi.
    let nu = GridMeasure::qsd(&grid, 0.5).unwrap();
    let (occupation, cycles) =
        mc::jump_boundary_occupation(&grid, InitialLaw::Measure(&grid, &nu), &cfg).unwrap();
    let d = renewal::kolmogorov_distance(&occupation, &nu);
    println!("\nrestart chain from nu_0.5: {cycles} cycles");
    println!("Kolmogorov distance occupation vs nu_0.5 = {d:.4}");
}
