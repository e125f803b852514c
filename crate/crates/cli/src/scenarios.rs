//! Shipped change-point presets. Each pairs a first-half success matrix
//! with a second-half one that invalidates the first-half matching in a
//! different way; all use n = 5 users, m = 3 channels, a change at the
//! midpoint of 10^5 slots, and the proportional-fairness log utility.

use crate::config::{parse_config, ConfigError, RunConfig};

pub struct Scenario {
    pub number: usize,
    pub name: &'static str,
    pub summary: &'static str,
    pub text: &'static str,
}

pub const SCENARIOS: [Scenario; 4] = [
    Scenario {
        number: 1,
        name: "links-off",
        summary: "each user's strongest link dies at the midpoint",
        text: include_str!("../../../configs/scenario1.conf"),
    },
    Scenario {
        number: 2,
        name: "links-on",
        summary: "strong links appear at the midpoint",
        text: include_str!("../../../configs/scenario2.conf"),
    },
    Scenario {
        number: 3,
        name: "rotated",
        summary: "every user's best channel moves at the midpoint",
        text: include_str!("../../../configs/scenario3.conf"),
    },
    Scenario {
        number: 4,
        name: "flipped",
        summary: "strong and weak links trade places at the midpoint",
        text: include_str!("../../../configs/scenario4.conf"),
    },
];

pub fn scenario(number: usize) -> Option<&'static Scenario> {
    SCENARIOS.iter().find(|scenario| scenario.number == number)
}

pub fn scenario_config(number: usize) -> Result<RunConfig, ConfigError> {
    let scenario = scenario(number)
        .ok_or_else(|| ConfigError::Global(format!("no scenario {number}")))?;
    parse_config(scenario.text)
}
