//! Angle representation, bin discretization, expectation decoding and error
//! metrics shared by all supervised heads.
//!
//! Angles are degrees everywhere in the public API. A `BinSpec` discretizes
//! the angle range into fixed-width classification bins; a predicted
//! probability vector over those bins decodes back to a continuous angle as
//! the probability-weighted mean of bin centers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The three head pose angle names, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Angle {
    Yaw,
    Pitch,
    Roll,
}

impl Angle {
    pub const ALL: [Angle; 3] = [Angle::Yaw, Angle::Pitch, Angle::Roll];

    pub fn name(&self) -> &'static str {
        match self {
            Angle::Yaw => "yaw",
            Angle::Pitch => "pitch",
            Angle::Roll => "roll",
        }
    }
}

impl std::fmt::Display for Angle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Yaw/pitch/roll in degrees. Roll is optional: some sources label only yaw
/// and pitch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerPose {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: Option<f64>,
}

impl EulerPose {
    pub fn new(yaw: f64, pitch: f64, roll: Option<f64>) -> Result<Self> {
        let pose = EulerPose { yaw, pitch, roll };
        pose.validate()?;
        Ok(pose)
    }

    pub fn validate(&self) -> Result<()> {
        for (angle, value) in self.iter() {
            if !value.is_finite() {
                return Err(Error::invalid(format!("{angle} angle is not finite")));
            }
        }
        Ok(())
    }

    /// Returns the value of one named angle, if present.
    pub fn get(&self, angle: Angle) -> Option<f64> {
        match angle {
            Angle::Yaw => Some(self.yaw),
            Angle::Pitch => Some(self.pitch),
            Angle::Roll => self.roll,
        }
    }

    /// Iterates over the present angles in canonical order.
    pub fn iter(&self) -> impl Iterator<Item = (Angle, f64)> + '_ {
        Angle::ALL
            .iter()
            .filter_map(|&a| self.get(a).map(|v| (a, v)))
    }

    /// The set of angles this pose carries.
    pub fn angle_set(&self) -> Vec<Angle> {
        self.iter().map(|(a, _)| a).collect()
    }
}

/// Discretization of an angle range into fixed-width classification bins.
///
/// The representative value of bin `i` is its center,
/// `min_deg + width_deg * (i + 0.5)`, so a uniform probability vector over a
/// symmetric range decodes to exactly zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    pub min_deg: f64,
    pub max_deg: f64,
    pub width_deg: f64,
}

impl Default for BinSpec {
    fn default() -> Self {
        BinSpec::with_width(3.0)
    }
}

impl BinSpec {
    /// Bins of the given width over the default [-99, +99] degree range.
    pub fn with_width(width_deg: f64) -> Self {
        BinSpec {
            min_deg: -99.0,
            max_deg: 99.0,
            width_deg,
        }
    }

    pub fn new(min_deg: f64, max_deg: f64, width_deg: f64) -> Result<Self> {
        let spec = BinSpec {
            min_deg,
            max_deg,
            width_deg,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min_deg.is_finite() && self.max_deg.is_finite() && self.width_deg.is_finite()) {
            return Err(Error::invalid("bin spec bounds must be finite"));
        }
        if self.width_deg <= 0.0 {
            return Err(Error::invalid("bin width must be positive"));
        }
        let count = self.count();
        if count < 2 {
            return Err(Error::invalid(format!(
                "bin spec yields {count} bins; at least 2 required"
            )));
        }
        if count as f64 * self.width_deg > (self.max_deg - self.min_deg) + self.width_deg {
            return Err(Error::invalid("bin count exceeds the covered range"));
        }
        Ok(())
    }

    /// Number of bins: floor((max - min) / width).
    pub fn count(&self) -> usize {
        ((self.max_deg - self.min_deg) / self.width_deg).floor() as usize
    }
}

/// Maps an angle to its bin index, clamping out-of-range angles into the
/// boundary bins.
pub fn bin_index(angle_deg: f64, spec: &BinSpec) -> Result<usize> {
    if !angle_deg.is_finite() {
        return Err(Error::invalid("angle is not finite"));
    }
    let count = spec.count();
    let raw = ((angle_deg - spec.min_deg) / spec.width_deg).floor();
    let clamped = raw.max(0.0).min((count - 1) as f64);
    Ok(clamped as usize)
}

/// Returns the center value of a bin in degrees.
pub fn bin_value(index: usize, spec: &BinSpec) -> Result<f64> {
    if index >= spec.count() {
        return Err(Error::invalid(format!(
            "bin index {index} out of range for {} bins",
            spec.count()
        )));
    }
    Ok(spec.min_deg + spec.width_deg * (index as f64 + 0.5))
}

/// Centers of every bin, in index order.
pub fn bin_centers(spec: &BinSpec) -> Vec<f64> {
    (0..spec.count())
        .map(|i| spec.min_deg + spec.width_deg * (i as f64 + 0.5))
        .collect()
}

/// Decodes a probability vector over bins to a continuous angle: the
/// probability-weighted mean of bin centers.
pub fn expectation(probs: &[f64], spec: &BinSpec) -> Result<f64> {
    if probs.len() != spec.count() {
        return Err(Error::invalid(format!(
            "probability vector has {} entries, bin spec has {}",
            probs.len(),
            spec.count()
        )));
    }
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p * (spec.min_deg + spec.width_deg * (i as f64 + 0.5));
    }
    Ok(acc)
}

/// Per-angle mean absolute error plus the average over present angles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub per_angle_mae: BTreeMap<Angle, f64>,
    pub average_mae: f64,
}

impl Metrics {
    pub fn get(&self, angle: Angle) -> Option<f64> {
        self.per_angle_mae.get(&angle).copied()
    }
}

/// Computes per-angle MAE between predictions and labels, in degrees.
///
/// Every prediction/label pair must carry the same set of angles.
pub fn mean_absolute_error(predictions: &[EulerPose], labels: &[EulerPose]) -> Result<Metrics> {
    if predictions.is_empty() || predictions.len() != labels.len() {
        return Err(Error::invalid(format!(
            "need equal non-empty prediction/label lists, got {} and {}",
            predictions.len(),
            labels.len()
        )));
    }
    let angle_set = labels[0].angle_set();
    let mut sums: BTreeMap<Angle, f64> = angle_set.iter().map(|&a| (a, 0.0)).collect();
    for (pred, label) in predictions.iter().zip(labels) {
        if pred.angle_set() != angle_set || label.angle_set() != angle_set {
            return Err(Error::invalid(
                "prediction/label pairs carry inconsistent angle sets",
            ));
        }
        for &angle in &angle_set {
            let p = pred.get(angle).expect("angle set checked");
            let l = label.get(angle).expect("angle set checked");
            *sums.get_mut(&angle).expect("angle set checked") += (p - l).abs();
        }
    }
    let n = predictions.len() as f64;
    let per_angle_mae: BTreeMap<Angle, f64> =
        sums.into_iter().map(|(a, s)| (a, s / n)).collect();
    let average_mae = per_angle_mae.values().sum::<f64>() / per_angle_mae.len() as f64;
    Ok(Metrics {
        per_angle_mae,
        average_mae,
    })
}
