//! Figures of merit for the dyne phase measurement and the quality of the
//! single-rail qubit it prepares.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

/// `⟨|X|⟩` for a unit Gaussian quadrature: `√(2/π)`.
pub fn homodyne_exact() -> f64 {
    (2.0 / std::f64::consts::PI).sqrt()
}

/// `⟨|A|⟩` for a unit complex Gaussian: `√π/2`.
pub fn heterodyne_exact() -> f64 {
    std::f64::consts::PI.sqrt() / 2.0
}

/// `F̃ = (9 − ⟨|R|⁴⟩)/8`. Not clipped.
pub fn approx_merit_from_m4(m4: f64) -> f64 {
    (9.0 - m4) / 8.0
}

/// Quality of the 50:50 qubit prepared by heralding on a measurement with merit `f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QubitMetrics {
    pub f: f64,
    pub fidelity: f64,
    pub purity: f64,
    pub rho2: [[Complex64; 2]; 2],
}

pub fn qubit_metrics(f: f64) -> Result<QubitMetrics> {
    if !(0.0..=1.0).contains(&f) {
        return Err(Error::InvalidParameter(format!(
            "figure of merit must lie in [0, 1], got {f}"
        )));
    }
    let half = Complex64::new(0.5, 0.0);
    let off = Complex64::new(0.5 * f, 0.0);
    Ok(QubitMetrics {
        f,
        fidelity: (1.0 + f) / 2.0,
        purity: (1.0 + f * f) / 2.0,
        rho2: [[half, off], [off, half]],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table1Row {
    pub measurement: &'static str,
    pub exact: f64,
    pub approx: f64,
}

pub fn table1() -> Vec<Table1Row> {
    vec![
        Table1Row {
            measurement: "homodyne",
            exact: homodyne_exact(),
            approx: approx_merit_from_m4(3.0),
        },
        Table1Row {
            measurement: "heterodyne",
            exact: heterodyne_exact(),
            approx: approx_merit_from_m4(2.0),
        },
        Table1Row {
            measurement: "adaptive",
            exact: 1.0,
            approx: approx_merit_from_m4(1.0),
        },
    ]
}
