//! The benchmark systems.

use crate::linalg::Mat;
use crate::linsys::LinearSystem;

/// Weakly coupled, marginally unstable chain of three nodes.
pub fn laplacian() -> LinearSystem {
    let a = Mat::from_row_slice(3, 3, &[1.01, 0.01, 0.0, 0.01, 1.01, 0.01, 0.0, 0.01, 1.01]);
    diag_costs(a, 10.0, 1.0)
}

/// Unstable lower-triangular chain with large transients.
pub fn large_transient() -> LinearSystem {
    let a = Mat::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 4.0, 2.0, 0.0, 0.0, 4.0, 2.0]);
    diag_costs(a, 10.0, 1.0)
}

/// Known plant of the forecasting study: the Laplacian dynamics with cheap
/// states and expensive inputs.
pub fn demand_plant() -> LinearSystem {
    let lap = laplacian();
    diag_costs(lap.a, 1.0, 1e3)
}

/// Disturbance dynamics of the forecasting study.
pub fn demand_disturbance() -> Mat {
    Mat::from_row_slice(3, 3, &[0.5, 0.1, 0.0, 0.0, 0.5, 0.1, 0.0, 0.0, 0.5])
}

fn diag_costs(a: Mat, q: f64, r: f64) -> LinearSystem {
    let n = a.nrows();
    LinearSystem::new(a, Mat::identity(n, n), Mat::identity(n, n) * q, Mat::identity(n, n) * r, 1.0)
        .expect("preset is well formed")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Laplacian,
    LargeTransient,
    Demand,
}

impl Preset {
    pub fn system(self) -> LinearSystem {
        match self {
            Preset::Laplacian => laplacian(),
            Preset::LargeTransient => large_transient(),
            Preset::Demand => demand_plant(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Laplacian => "laplacian",
            Preset::LargeTransient => "large_transient",
            Preset::Demand => "demand",
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "laplacian" => Ok(Preset::Laplacian),
            "large_transient" | "large-transient" => Ok(Preset::LargeTransient),
            "demand" => Ok(Preset::Demand),
            other => Err(crate::Error::Parse(format!("unknown preset {other}"))),
        }
    }
}
