//! Serializable sequence descriptions and their content hash.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::filter::{cp_locations, udd_locations};
use crate::filter::{DdFilter, DdSpec, LocationRule, Precision, Provenance, PulseFilter, PulseKind};
use crate::sequence::{ControlSegment, ControlSequence, SpectralControlMatrix};

/// A control sequence as written in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SequenceSpec {
    Segments {
        segments: Vec<ControlSegment>,
    },
    Dd {
        rule: LocationRule,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        locations: Option<Vec<f64>>,
        total_time: f64,
        pulse: PulseKind,
        #[serde(default)]
        pulse_width: f64,
    },
    Pulse {
        pulse: PulseKind,
        tau_pi: f64,
    },
    Free {
        duration: f64,
    },
}

/// A sequence ready for evaluation in both domains.
pub struct BuiltSequence {
    sequence: Option<ControlSequence>,
    pub spectral: Box<dyn SpectralControlMatrix + Send>,
    pub provenance: Provenance,
    /// Time scale for dimensionless frequencies.
    pub time_unit: f64,
}

impl BuiltSequence {
    /// The time-resolved sequence; bang-bang DD exists only in the frequency domain.
    pub fn time_domain(&self) -> Result<&ControlSequence> {
        self.sequence.as_ref().ok_or_else(|| {
            Error::InvalidSpec(
                "bang-bang pulses are instantaneous; only frequency-domain evaluation is available".into(),
            )
        })
    }
}

impl SequenceSpec {
    pub fn dd_spec(&self) -> Result<Option<DdSpec>> {
        let SequenceSpec::Dd {
            rule,
            n,
            locations,
            total_time,
            pulse,
            pulse_width,
        } = self
        else {
            return Ok(None);
        };
        let locs = match (rule, n, locations) {
            (LocationRule::Custom, _, Some(l)) => l.clone(),
            (LocationRule::Custom, _, None) => {
                return Err(Error::InvalidSpec("custom rule needs explicit locations".into()))
            }
            (_, _, Some(_)) => {
                return Err(Error::InvalidSpec(
                    "locations are only accepted with the custom rule".into(),
                ))
            }
            (LocationRule::Cp, Some(n), None) => cp_locations(*n),
            (LocationRule::Udd, Some(n), None) => udd_locations(*n),
            (_, None, None) => return Err(Error::InvalidSpec("pulse count n is required".into())),
        };
        DdSpec::new(*rule, locs, *total_time, *pulse, *pulse_width).map(Some)
    }

    pub fn build(&self, precision: Precision) -> Result<BuiltSequence> {
        match self {
            SequenceSpec::Segments { segments } => {
                if segments.is_empty() {
                    return Err(Error::InvalidSpec("segment list is empty".into()));
                }
                let seq = ControlSequence::new(segments.clone());
                let unit = seq.total_time();
                Ok(BuiltSequence {
                    spectral: Box::new(seq.clone()),
                    sequence: Some(seq),
                    provenance: Provenance::Assembled,
                    time_unit: unit,
                })
            }
            SequenceSpec::Free { duration } => {
                let seq = ControlSequence::new(vec![ControlSegment::free(*duration)?]);
                Ok(BuiltSequence {
                    spectral: Box::new(seq.clone()),
                    sequence: Some(seq),
                    provenance: Provenance::Assembled,
                    time_unit: *duration,
                })
            }
            SequenceSpec::Pulse { pulse, tau_pi } => {
                let f = PulseFilter::new(*pulse, *tau_pi, precision)?;
                Ok(BuiltSequence {
                    sequence: Some(f.to_sequence()?),
                    spectral: Box::new(f),
                    provenance: Provenance::ClosedForm,
                    time_unit: *tau_pi,
                })
            }
            SequenceSpec::Dd { .. } => {
                let spec = self.dd_spec()?.expect("dd variant");
                // instantaneous pulses have no piecewise-constant form
                let sequence = if spec.pulse == PulseKind::BangBang {
                    None
                } else {
                    Some(spec.to_sequence()?)
                };
                let f = DdFilter::new(spec, precision);
                Ok(BuiltSequence {
                    provenance: f.provenance(),
                    time_unit: f.spec.total_time,
                    sequence,
                    spectral: Box::new(f),
                })
            }
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("sequence spec serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dd_from_toml() {
        let s: SequenceSpec =
            toml::from_str("kind = \"dd\"\nrule = \"udd\"\nn = 2\ntotal_time = 1.0\npulse = \"bang_bang\"\n").unwrap();
        let d = s.dd_spec().unwrap().unwrap();
        assert!((d.locations[0] - 0.25).abs() < 1e-16);
        let built = s.build(Precision::Double).unwrap();
        assert!(built.time_domain().is_err());
        assert_eq!(built.spectral.total_time(), 1.0);
    }

    #[test]
    fn rejects_inconsistent_specs() {
        let bad = [
            "kind = \"dd\"\nrule = \"cp\"\ntotal_time = 1.0\npulse = \"bang_bang\"\n",
            "kind = \"dd\"\nrule = \"custom\"\ntotal_time = 1.0\npulse = \"bang_bang\"\n",
            "kind = \"pulse\"\npulse = \"primitive_pi\"\ntau_pi = -1.0\n",
            "kind = \"segments\"\nsegments = []\n",
        ];
        for b in bad {
            let s: SequenceSpec = toml::from_str(b).unwrap();
            assert!(s.build(Precision::Double).is_err(), "{b}");
        }
        assert!(toml::from_str::<SequenceSpec>("kind = \"free\"\nduration = 1.0\nextra = 2\n").is_err());
    }

    #[test]
    fn hash_is_stable_across_round_trip() {
        let s = SequenceSpec::Pulse {
            pulse: PulseKind::DcgNot,
            tau_pi: 0.1,
        };
        let back: SequenceSpec = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(s.hash(), back.hash());
        assert_eq!(s.hash().len(), 64);
        let other = SequenceSpec::Pulse {
            pulse: PulseKind::DcgNot,
            tau_pi: 0.2,
        };
        assert_ne!(s.hash(), other.hash());
    }
}
