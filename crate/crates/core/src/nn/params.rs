use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::mp;
use crate::Result;

/// How a parameter group enters the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ParamKind {
    /// Kernel rows of length `fan_in`, learned under forced weight normalization.
    Weight,
    /// Unconstrained scalar gain.
    Gain,
}

/// A named block of parameters. For [`ParamKind::Weight`] the first shape
/// entry counts output units and the product of the rest is the fan-in.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGroup {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: ParamKind,
    pub data: Vec<f64>,
}

impl ParamGroup {
    pub fn fan_in(&self) -> usize {
        self.shape[1..].iter().product::<usize>().max(1)
    }

    pub fn outputs(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }
}

/// Rescales every weight row of every weight group to unit RMS.
pub fn normalize_weights(groups: &mut [ParamGroup]) -> Result<()> {
    for g in groups.iter_mut().filter(|g| g.kind == ParamKind::Weight) {
        let fan_in = g.fan_in();
        mp::normalize_rows(&mut g.data, fan_in)?;
    }
    Ok(())
}

/// Gradient buffers laid out like the parameter groups they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    groups: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_for(params: &[ParamGroup]) -> Self {
        Self {
            groups: params.iter().map(|g| vec![0.0; g.data.len()]).collect(),
        }
    }

    pub fn groups(&self) -> &[Vec<f64>] {
        &self.groups
    }

    pub fn group(&self, i: usize) -> &[f64] {
        &self.groups[i]
    }

    pub fn group_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.groups[i]
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.groups.iter_mut().zip(&other.groups) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        for g in &mut self.groups {
            g.iter_mut().for_each(|v| *v *= k);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.groups.iter().flatten().all(|v| v.is_finite())
    }
}
