//! Riesz 2-energy of the smoothed lattice measure for growing q.

use heislat::measure::{energy_all_pairs, energy_integral_mc, SmoothedMeasure, ThickLattice};

fn main() {
    for q in [4.0, 8.0, 16.0, 32.0] {
        let m = SmoothedMeasure::new(ThickLattice::new(q, 1.5, 1).unwrap());
        let e = energy_integral_mc(&m, 2.0, 1_000_000, 7).unwrap();
        print!("q = {q:>2}: {} cells, E = {:.4} ± {:.4}", m.support_cells(), e.value, e.stderr);
        if q <= 8.0 {
            print!(", all pairs {:.4}", energy_all_pairs(&m, 2.0).unwrap());
        }
        println!();
    }
}
