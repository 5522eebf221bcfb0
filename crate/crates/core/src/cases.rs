//! Bundled test systems.
//!
//! The IEEE 14-, 30- and 118-bus systems ship as MATPOWER tables; the small cases are
//! hand-written in the native format.

use crate::grid::{parse_case, parse_matpower, GridCase};

pub const IEEE14_MATPOWER: &str = include_str!("../../../cases/case14.m");
pub const IEEE30_MATPOWER: &str = include_str!("../../../cases/case30.m");
pub const IEEE118_MATPOWER: &str = include_str!("../../../cases/case118.m");

/// Two buses joined by a unit-reactance line, slack at bus 0.
pub const TWO_BUS: &str = "case two_bus\nbus 0\nbus 1\nbranch 0 1 1.0\nslack 0\n";

/// Three buses on a path `0 - 1 - 2` with unit reactances, slack at bus 0.
pub const THREE_BUS: &str =
    "case three_bus\nbus 0\nbus 1\nbus 2\nbranch 0 1 1.0\nbranch 1 2 1.0\nslack 0\n";

pub fn two_bus() -> GridCase {
    parse_case(TWO_BUS).expect("bundled case is valid")
}

pub fn three_bus() -> GridCase {
    parse_case(THREE_BUS).expect("bundled case is valid")
}

pub fn ieee14() -> GridCase {
    parse_matpower(IEEE14_MATPOWER).expect("bundled case is valid")
}

pub fn ieee30() -> GridCase {
    parse_matpower(IEEE30_MATPOWER).expect("bundled case is valid")
}

pub fn ieee118() -> GridCase {
    parse_matpower(IEEE118_MATPOWER).expect("bundled case is valid")
}

/// Names accepted by [`by_name`].
pub const NAMES: [&str; 5] = ["two_bus", "three_bus", "ieee14", "ieee30", "ieee118"];

/// A bundled case by name.
pub fn by_name(name: &str) -> Option<GridCase> {
    match name {
        "two_bus" => Some(two_bus()),
        "three_bus" => Some(three_bus()),
        "ieee14" => Some(ieee14()),
        "ieee30" => Some(ieee30()),
        "ieee118" => Some(ieee118()),
        _ => None,
    }
}
