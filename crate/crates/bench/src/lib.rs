//! Fixtures shared by the benchmarks.

use guidance_core::{DifferentialOperator, Grid, GridState, Preset, StateSpec};

/// Anisotropic oscillator with a mixed position-momentum term, in `dim` axes.
pub fn hamiltonian(dim: usize) -> DifferentialOperator {
    let mut terms = Vec::new();
    let slot = |a: usize, k: u32| {
        let idx: Vec<String> = (0..dim).map(|b| if a == b { k.to_string() } else { "0".into() }).collect();
        format!("[{}]", idx.join(","))
    };
    let zero = slot(0, 0);
    let mut potential = String::from("0");
    for a in 0..dim {
        terms.push((slot(a, 2), format!("-{}", 0.5 / (a + 1) as f64)));
        potential.push_str(&format!(" + 0.5*q{}^2", a + 1));
    }
    terms.push((zero, potential));
    let borrowed: Vec<(&str, &str)> = terms.iter().map(|(s, c)| (s.as_str(), c.as_str())).collect();
    DifferentialOperator::from_strs(dim, &borrowed).expect("fixture hamiltonian")
}

/// The fourth-order free operator `D^4` in one dimension.
pub fn quartic() -> DifferentialOperator {
    DifferentialOperator::from_strs(1, &[("[4]", "1")]).expect("quartic")
}

pub fn grid(dim: usize, points: usize) -> Grid {
    Grid::cube(dim, points, -8.0, 16.0).expect("grid")
}

/// Moving Gaussian packet, normalized.
pub fn packet(grid: &Grid) -> GridState {
    let dim = grid.dim();
    let mut k = vec![0.0; dim];
    k[0] = 1.0;
    StateSpec::single(Preset::gaussian(vec![0.5; dim], vec![1.0; dim], k)).build(grid).expect("packet")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_build() {
        for dim in 1..=3 {
            let h = hamiltonian(dim);
            assert!(h.is_hermitian(&guidance_core::SampleSpec::default()).unwrap());
            let g = grid(dim, 16);
            assert_eq!(packet(&g).values.len(), g.len());
        }
        assert_eq!(quartic().max_order(), 4);
    }
}
