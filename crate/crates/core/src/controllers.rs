//! Named controller catalog.
//!
//! Each controller is one optional social cost component plus one optional
//! constraint type. The thirteen benchmark variants are constructible by name;
//! other combinations go through [`ControllerSpec::custom`].

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};
use crate::socialcost::{SafetyGeometry, Weights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CostComponent {
    None,
    Euclidean,
    Mahalanobis,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ConstraintType {
    None,
    Edc,
    Mdc,
    Aedc,
    Amdc,
    Elc { gamma: f64 },
    Aelc { gamma: f64 },
}

impl ConstraintType {
    pub fn is_adaptive(&self) -> bool {
        matches!(self, ConstraintType::Aedc | ConstraintType::Amdc | ConstraintType::Aelc { .. })
    }

    pub fn needs_covariance(&self) -> bool {
        matches!(
            self,
            ConstraintType::Mdc | ConstraintType::Amdc | ConstraintType::Elc { .. } | ConstraintType::Aelc { .. }
        )
    }

    fn suffix(&self) -> String {
        match self {
            ConstraintType::None => String::new(),
            ConstraintType::Edc => "-EDC".into(),
            ConstraintType::Mdc => "-MDC".into(),
            ConstraintType::Aedc => "-AEDC".into(),
            ConstraintType::Amdc => "-AMDC".into(),
            ConstraintType::Elc { gamma } => format!("-ELC-{gamma}"),
            ConstraintType::Aelc { gamma } => format!("-AELC-{gamma}"),
        }
    }
}

/// Default weights and geometry shared by every catalog entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerDefaults {
    pub weights: Weights,
    pub geometry: SafetyGeometry,
    /// `Q_r` used with the Euclidean cost component.
    pub q_r_euclidean: f64,
    /// `Q_r` used otherwise.
    pub q_r_other: f64,
}

impl Default for ControllerDefaults {
    fn default() -> Self {
        Self {
            weights: Weights::default(),
            geometry: SafetyGeometry::default(),
            q_r_euclidean: 100.0,
            q_r_other: 1000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerSpec {
    pub name: String,
    pub cost_component: CostComponent,
    pub constraint: ConstraintType,
    pub weights: Weights,
    pub geometry: SafetyGeometry,
    /// True for the thirteen benchmark variants.
    pub in_catalog: bool,
}

impl fmt::Display for ControllerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

impl ControllerSpec {
    /// Builds an arbitrary cost/constraint combination with default wiring.
    pub fn custom(cost: CostComponent, constraint: ConstraintType, defaults: &ControllerDefaults) -> Self {
        let prefix = match cost {
            CostComponent::None => "",
            CostComponent::Euclidean => "ED-",
            CostComponent::Mahalanobis => "MD-",
        };
        let name = format!("{prefix}MPC{}", constraint.suffix());
        let mut weights = defaults.weights;
        weights.q_r = if cost == CostComponent::Euclidean {
            defaults.q_r_euclidean
        } else {
            defaults.q_r_other
        };
        let in_catalog = CATALOG.iter().any(|(n, _, _)| *n == name);
        Self {
            name,
            cost_component: cost,
            constraint,
            weights,
            geometry: defaults.geometry,
            in_catalog,
        }
    }

    /// Adaptive constraints replace the control cost by the augmented one.
    pub fn uses_augmented_cost(&self) -> bool {
        self.constraint.is_adaptive()
    }

    pub fn needs_covariance(&self) -> bool {
        self.cost_component == CostComponent::Mahalanobis || self.constraint.needs_covariance()
    }
}

const CATALOG: [(&str, CostComponent, ConstraintType); 13] = [
    ("ED-MPC", CostComponent::Euclidean, ConstraintType::None),
    ("ED-MPC-EDC", CostComponent::Euclidean, ConstraintType::Edc),
    ("ED-MPC-MDC", CostComponent::Euclidean, ConstraintType::Mdc),
    ("MD-MPC-MDC", CostComponent::Mahalanobis, ConstraintType::Mdc),
    ("MD-MPC-EDC", CostComponent::Mahalanobis, ConstraintType::Edc),
    ("ED-MPC-AEDC", CostComponent::Euclidean, ConstraintType::Aedc),
    ("MD-MPC-AEDC", CostComponent::Mahalanobis, ConstraintType::Aedc),
    ("MPC-AEDC", CostComponent::None, ConstraintType::Aedc),
    ("MPC-AMDC", CostComponent::None, ConstraintType::Amdc),
    ("MPC-ELC-2", CostComponent::None, ConstraintType::Elc { gamma: 2.0 }),
    ("MPC-ELC-3", CostComponent::None, ConstraintType::Elc { gamma: 3.0 }),
    ("MPC-AELC-2", CostComponent::None, ConstraintType::Aelc { gamma: 2.0 }),
    ("MPC-AELC-3", CostComponent::None, ConstraintType::Aelc { gamma: 3.0 }),
];

/// Names accepted by [`build_named`] beyond the catalog.
const EXTRA: [(&str, CostComponent, ConstraintType); 4] = [
    ("MPC", CostComponent::None, ConstraintType::None),
    ("MD-MPC", CostComponent::Mahalanobis, ConstraintType::None),
    ("MPC-EDC", CostComponent::None, ConstraintType::Edc),
    ("MPC-MDC", CostComponent::None, ConstraintType::Mdc),
];

/// The thirteen benchmark controllers in catalog order.
pub fn list_paper_controllers() -> Vec<&'static str> {
    CATALOG.iter().map(|(n, _, _)| *n).collect()
}

/// Every name accepted by [`build_named`].
pub fn list_all_controllers() -> Vec<&'static str> {
    CATALOG.iter().chain(EXTRA.iter()).map(|(n, _, _)| *n).collect()
}

pub fn build_named(name: &str, defaults: &ControllerDefaults) -> Result<ControllerSpec> {
    CATALOG
        .iter()
        .chain(EXTRA.iter())
        .find(|(n, _, _)| *n == name)
        .map(|(_, cost, constraint)| ControllerSpec::custom(*cost, *constraint, defaults))
        .ok_or_else(|| Error::UnknownController {
            name: name.to_string(),
            valid: list_all_controllers().join(", "),
        })
}
