//! Configuration, recipes, CSV artifacts and run reports.

pub mod config;
pub mod csv;
mod recipes;
pub mod report;

pub use config::{
    cost_by_name, load_config, parse_config, parse_config_with, ExperimentConfig, Overrides, COSTS,
    MEASURES, PROBLEMS, RECIPES,
};
pub use csv::{emit_csv, Table};
pub use recipes::{
    run_experiment, AFFINE_ITO_TOL, CLOSED_FORM_TOL, DMP_REL_TOL, FIRST_ORDER_BAND,
    HALF_ORDER_BAND, MC_ABS_TOL,
};
pub use report::{CheckResult, RunReport};
