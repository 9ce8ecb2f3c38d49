//! JSON dump of an analog beamformer for offline inspection.
//!
//! ```json
//! { "format": "palink-beamformer", "version": 1, "architecture": "partial-geb",
//!   "n_antennas": 96, "n_chains": 6,
//!   "groups": [{ "chains": [0, 2], "users": [0, 2] }, ...],
//!   "eigenvalues": [...],
//!   "re": [[...], ...], "im": [[...], ...] }
//! ```
//!
//! `re` and `im` are row-major (`re[m][d]` is antenna `m`, chain `d`).
//! Ranges are half-open.

use std::path::Path;

use palink_core::{beamformer::AnalogBeamformer, math::linalg::CMatrix, scenario::Architecture};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const FORMAT: &str = "palink-beamformer";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupDump {
    pub chains: [usize; 2],
    pub users: [usize; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamformerDump {
    pub format: String,
    pub version: u32,
    pub architecture: Architecture,
    pub n_antennas: usize,
    pub n_chains: usize,
    pub groups: Vec<GroupDump>,
    pub eigenvalues: Vec<f64>,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl BeamformerDump {
    pub fn new(b: &AnalogBeamformer) -> Self {
        let m = &b.matrix;
        BeamformerDump {
            format: FORMAT.into(),
            version: VERSION,
            architecture: b.architecture,
            n_antennas: m.nrows(),
            n_chains: m.ncols(),
            groups: b
                .layout
                .iter()
                .map(|s| GroupDump { chains: [s.chains.start, s.chains.end], users: [s.users.start, s.users.end] })
                .collect(),
            eigenvalues: b.eigenvalues.clone(),
            re: (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| m[(r, c)].re).collect()).collect(),
            im: (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| m[(r, c)].im).collect()).collect(),
        }
    }

    pub fn matrix(&self) -> CMatrix {
        CMatrix::from_fn(self.n_antennas, self.n_chains, |r, c| palink_core::math::C64::new(self.re[r][c], self.im[r][c]))
    }
}

pub fn to_json(b: &AnalogBeamformer) -> String {
    serde_json::to_string_pretty(&BeamformerDump::new(b)).expect("serializable")
}

pub fn read(path: &Path) -> Result<BeamformerDump> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let d: BeamformerDump = serde_json::from_str(&text)?;
    if d.format != FORMAT || d.version != VERSION {
        return Err(Error::Format { path: path.into(), kind: "beamformer dump" });
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use palink_core::{beamformer::dft_partial, scenario::Scenario};

    #[test]
    fn dump_preserves_the_matrix() {
        let s = Scenario::desk().with_architecture(Architecture::PartialDft).unwrap();
        let b = dft_partial(&s).unwrap();
        let d: BeamformerDump = serde_json::from_str(&to_json(&b)).unwrap();
        assert_eq!(d.matrix(), b.matrix);
        assert_eq!(d.groups.len(), 3);
        assert_eq!(d.architecture, Architecture::PartialDft);
    }
}
