pub mod activation;
pub mod cli;
pub mod error;
pub mod feedforward;
pub mod mean_field;
pub mod spin;
pub mod dynamics;
pub mod hebbian;
pub mod tsp;
