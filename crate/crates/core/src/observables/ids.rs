//! Stable observable identifiers and their evaluation on a state.

use super::{
    correlator_q, correlator_x, coupling_g, covariance_g, entropy_from_spectrum, klich_levitov_from_spectrum, Region,
    SpectralData,
};
use crate::error::{invalid, Result};
use crate::model::Boundary;
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use std::fmt;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ObservableId {
    /// Rényi entropy S^(N) of the half-cut; N = 1 is von Neumann.
    Renyi(u32),
    C2,
    C4,
    /// (pi^2/3) C^(2) + ... truncated at the given q_max; not a CSV id, used internally.
    KlichLevitov(u32),
    CovG,
    MutInfo,
    Cx,
    Cq,
    Gq,
}

impl fmt::Display for ObservableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObservableId::Renyi(1) => write!(f, "S1"),
            ObservableId::Renyi(2) => write!(f, "S2"),
            ObservableId::Renyi(n) => write!(f, "SN:{n}"),
            ObservableId::C2 => write!(f, "C2"),
            ObservableId::C4 => write!(f, "C4"),
            ObservableId::KlichLevitov(q) => write!(f, "KL:{q}"),
            ObservableId::CovG => write!(f, "covG"),
            ObservableId::MutInfo => write!(f, "mutinfo"),
            ObservableId::Cx => write!(f, "Cx"),
            ObservableId::Cq => write!(f, "Cq"),
            ObservableId::Gq => write!(f, "gq"),
        }
    }
}

impl FromStr for ObservableId {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let id = match s {
            "S1" => ObservableId::Renyi(1),
            "S2" => ObservableId::Renyi(2),
            "C2" => ObservableId::C2,
            "C4" => ObservableId::C4,
            "covG" => ObservableId::CovG,
            "mutinfo" => ObservableId::MutInfo,
            "Cx" => ObservableId::Cx,
            "Cq" => ObservableId::Cq,
            "gq" => ObservableId::Gq,
            _ => {
                if let Some(n) = s.strip_prefix("SN:") {
                    match n.parse::<u32>() {
                        Ok(n) if n >= 1 => ObservableId::Renyi(n),
                        _ => return Err(format!("invalid Renyi index in '{s}'")),
                    }
                } else if let Some(q) = s.strip_prefix("KL:") {
                    match q.parse::<u32>() {
                        Ok(q) if (1..=4).contains(&q) => ObservableId::KlichLevitov(q),
                        _ => return Err(format!("invalid series order in '{s}'")),
                    }
                } else {
                    return Err(format!("unknown observable '{s}'"));
                }
            }
        };
        Ok(id)
    }
}

impl ObservableId {
    fn needs_half_spectrum(self) -> bool {
        matches!(self, ObservableId::Renyi(_) | ObservableId::C2 | ObservableId::C4 | ObservableId::KlichLevitov(_))
    }

    fn needs_correlator(self) -> bool {
        matches!(self, ObservableId::Cx | ObservableId::Cq | ObservableId::Gq)
    }
}

/// One scalar output column: an observable on a region (or a lattice/momentum label).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Channel {
    pub observable: ObservableId,
    pub region: String,
}

/// A fixed list of observables with their regions and output channels.
#[derive(Clone, Debug)]
pub struct ObservableSet {
    ids: Vec<ObservableId>,
    l: usize,
    half: Region,
    b: Region,
    c: Region,
    channels: Vec<Channel>,
}

impl ObservableSet {
    pub fn new(ids: &[ObservableId], l: usize, boundary: Boundary) -> Result<Self> {
        let mut uniq: Vec<ObservableId> = Vec::new();
        for id in ids {
            if !uniq.contains(id) {
                uniq.push(*id);
            }
        }
        if uniq.iter().any(|id| id.needs_correlator()) && boundary != Boundary::Periodic {
            return invalid("density correlator requires periodic boundaries");
        }
        let (b, c) = Region::thirds(l);
        let mut channels = Vec::new();
        for &id in &uniq {
            match id {
                ObservableId::CovG | ObservableId::MutInfo => {
                    channels.push(Channel { observable: id, region: "B|C".into() })
                }
                ObservableId::Cx => {
                    channels.extend((0..l).map(|x| Channel { observable: id, region: format!("x={x}") }))
                }
                ObservableId::Cq | ObservableId::Gq => {
                    channels.extend((1..=l / 2).map(|k| Channel { observable: id, region: format!("k={k}") }))
                }
                _ => channels.push(Channel { observable: id, region: "A".into() }),
            }
        }
        Ok(Self { ids: uniq, l, half: Region::half_cut(l), b, c, channels })
    }

    pub fn parse(names: &[String], l: usize, boundary: Boundary) -> Result<Self> {
        let mut ids = Vec::with_capacity(names.len());
        for n in names {
            match n.parse::<ObservableId>() {
                Ok(id) => ids.push(id),
                Err(e) => return invalid(e),
            }
        }
        Self::new(&ids, l, boundary)
    }

    pub fn ids(&self) -> &[ObservableId] {
        &self.ids
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    /// Values for every channel, in channel order.
    pub fn evaluate(&self, d: &DMatrix<C64>) -> Result<Vec<f64>> {
        let half = if self.ids.iter().any(|id| id.needs_half_spectrum()) {
            Some(SpectralData::of(d, &self.half)?)
        } else {
            None
        };
        let cx = if self.ids.iter().any(|id| id.needs_correlator()) { Some(correlator_x(d)) } else { None };
        let mut out = Vec::with_capacity(self.channels.len());
        for &id in &self.ids {
            match id {
                ObservableId::Renyi(n) => out.push(entropy_from_spectrum(&half.as_ref().unwrap().lambdas, n)?),
                ObservableId::C2 => out.push(half.as_ref().unwrap().cumulant(2)),
                ObservableId::C4 => out.push(half.as_ref().unwrap().cumulant(4)),
                ObservableId::KlichLevitov(q) => {
                    out.push(klich_levitov_from_spectrum(half.as_ref().unwrap(), q as usize)?)
                }
                ObservableId::CovG => out.push(covariance_g(d, &self.b, &self.c)?),
                ObservableId::MutInfo => out.push(super::mutual_information(d, &self.b, &self.c)?),
                ObservableId::Cx => out.extend_from_slice(cx.as_ref().unwrap()),
                ObservableId::Cq => out.extend(correlator_q(cx.as_ref().unwrap())),
                ObservableId::Gq => out.extend(coupling_g(&correlator_q(cx.as_ref().unwrap()), self.l)),
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identifiers_round_trip() {
        for s in ["S1", "S2", "SN:3", "C2", "C4", "covG", "mutinfo", "Cx", "Cq", "gq", "KL:3"] {
            let id: ObservableId = s.parse().unwrap();
            assert_eq!(id.to_string(), s);
        }
        assert_eq!("SN:1".parse::<ObservableId>().unwrap().to_string(), "S1");
        assert!("S7".parse::<ObservableId>().is_err());
        assert!("SN:0".parse::<ObservableId>().is_err());
        assert!("entropy".parse::<ObservableId>().is_err());
    }

    #[test]
    fn correlator_requires_ring() {
        assert!(ObservableSet::new(&[ObservableId::Cx], 8, Boundary::Open).is_err());
        let s = ObservableSet::new(&[ObservableId::Cx, ObservableId::Gq], 8, Boundary::Periodic).unwrap();
        assert_eq!(s.channels().len(), 8 + 4);
    }

    #[test]
    fn evaluation_order_matches_channels() {
        let d = super::super::testutil::random_pure_d(9, 4, 11);
        let ids = [ObservableId::C2, ObservableId::Renyi(1), ObservableId::CovG];
        let set = ObservableSet::new(&ids, 9, Boundary::Open).unwrap();
        let v = set.evaluate(&d).unwrap();
        let a = Region::half_cut(9);
        assert_eq!(v.len(), 3);
        assert!((v[0] - super::super::charge_cumulants(&d, &a, 2).unwrap()[0]).abs() < 1e-14);
        assert!((v[1] - super::super::entanglement_entropy(&d, &a, 1).unwrap()).abs() < 1e-14);
        let (b, c) = Region::thirds(9);
        assert!((v[2] - covariance_g(&d, &b, &c).unwrap()).abs() < 1e-14);
    }
}
