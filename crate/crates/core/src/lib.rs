//! Transistor-level simulation and characterization of pass-transistor XNOR
//! cells and an 8-transistor full adder.
//!
//! The crate is layered bottom-up: [`device`] evaluates the MOSFET model,
//! [`netlist`] parses and flattens decks, [`engine`] solves DC and transient
//! problems, [`measure`] turns waveforms into power/delay/level figures,
//! [`cells`] builds the circuits with their stimulus and truth oracle, and
//! [`cli`] ties everything into the `picospice` binary.

pub mod device;
pub mod netlist;
pub mod engine;
pub mod measure;
pub mod cells;
pub mod cli;
