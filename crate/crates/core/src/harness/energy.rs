use serde::{Deserialize, Serialize};

use crate::conditioning::count_parameters;
use crate::error::{Error, Result};

/// Multiply-accumulates of one host-network forward pass, used as the
/// denominator of the interface overhead. Taken as the parameter count of the
/// 8.1M-parameter reference U-Net.
pub const HOST_MACS_PER_STEP: f64 = 8.1e6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyModel {
    /// `k_B·T` in joules (300 K).
    pub kbt_joules: f64,
    pub n_units: usize,
    pub n_steps: usize,
    /// Physical modules per logical unit; 2 counts encoder and decoder.
    pub units_multiplier: f64,
    pub gpu_joules_per_step: f64,
    pub adc_dac_derating: f64,
    pub extra_system_derating: f64,
    pub interface_overhead_fraction: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        Self {
            kbt_joules: 4.141e-21,
            n_units: 128,
            n_steps: 400,
            units_multiplier: 2.0,
            gpu_joules_per_step: 8e-3,
            adc_dac_derating: 1e3,
            extra_system_derating: 1e3,
            interface_overhead_fraction: interface_overhead(count_parameters(4, 64, false)),
        }
    }
}

/// Interface MACs per step (one per weight) relative to [`HOST_MACS_PER_STEP`].
pub fn interface_overhead(parameters: usize) -> f64 {
    parameters as f64 / HOST_MACS_PER_STEP
}

impl EnergyModel {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.kbt_joules,
            self.units_multiplier,
            self.gpu_joules_per_step,
            self.adc_dac_derating,
            self.extra_system_derating,
            self.interface_overhead_fraction,
        ]
        .iter()
        .all(|v| v.is_finite() && *v > 0.0);
        if !positive || self.n_units == 0 || self.n_steps == 0 || self.interface_overhead_fraction >= 1.0 {
            return Err(Error::InvalidArgument(format!(
                "energy model fields must be positive (overhead fraction below 1): {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyChain {
    pub e_thermo: f64,
    pub raw_gain: f64,
    pub derated_gain: f64,
    pub net_gain: f64,
}

pub fn energy_chain(model: &EnergyModel) -> Result<EnergyChain> {
    model.validate()?;
    let e_thermo =
        model.kbt_joules * model.units_multiplier * model.n_units as f64 * model.n_steps as f64;
    let raw_gain = model.gpu_joules_per_step / e_thermo;
    let derated_gain = raw_gain / model.adc_dac_derating;
    let net_gain =
        derated_gain / model.extra_system_derating * (1.0 - model.interface_overhead_fraction);
    Ok(EnergyChain {
        e_thermo,
        raw_gain,
        derated_gain,
        net_gain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_chain() {
        let c = energy_chain(&EnergyModel::default()).unwrap();
        let e = 4.141e-21 * 2.0 * 128.0 * 400.0;
        assert!((c.e_thermo - e).abs() <= 1e-12 * e);
        assert!((c.e_thermo - 4.24e-16).abs() < 0.01e-16);
        assert!((c.raw_gain / 1.887e13 - 1.0).abs() < 1e-3);
        assert!((c.derated_gain - c.raw_gain / 1e3).abs() <= 1e-12 * c.derated_gain);
        let overhead = 2560.0 / 8.1e6;
        assert!((c.net_gain - c.derated_gain / 1e3 * (1.0 - overhead)).abs() <= 1e-12 * c.net_gain);
    }

    #[test]
    fn single_module_halves_the_energy() {
        let m = EnergyModel {
            units_multiplier: 1.0,
            ..EnergyModel::default()
        };
        let c = energy_chain(&m).unwrap();
        assert!((c.e_thermo - 2.120e-16).abs() < 0.001e-16);
    }

    #[test]
    fn rejects_non_positive_fields() {
        for m in [
            EnergyModel {
                n_units: 0,
                ..EnergyModel::default()
            },
            EnergyModel {
                adc_dac_derating: 0.0,
                ..EnergyModel::default()
            },
            EnergyModel {
                interface_overhead_fraction: 1.0,
                ..EnergyModel::default()
            },
        ] {
            assert!(energy_chain(&m).is_err());
        }
    }
}
