//! Domain types: populations, age profiles, offspring families, environment
//! processes and the full model spec, plus exact pmf access and samplers.

mod env;
mod offspring;
mod population;
mod profile;
mod spec;

pub use env::{stationary_distribution, EnvProcessSpec, EnvSequence};
pub use offspring::OffspringFamily;
pub use population::AgePopulation;
pub use profile::{AgeProfile, FLOOR_PROBE_AGE};
pub use spec::LeslieSpec;
