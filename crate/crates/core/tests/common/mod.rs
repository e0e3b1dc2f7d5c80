//! Shared tiny configs for integration tests.

use hypermorl::io::parse_config;
use hypermorl::trainer::TrainConfig;

/// Small LQR run: horizon 10, a few thousand steps.
pub fn tiny_lqr(total_steps: u64, seed: u64) -> TrainConfig {
    parse_config(&format!(
        r#"
schema_version = 1
[environment]
id = "mo-lqr"
horizon = 10
[hypernet]
d = 2
embedding_hidden = [4]
policy_hidden = [4]
[training]
total_steps = {total_steps}
alpha = 0.2
k = 3
eta = 1e-3
seed = {seed}
workers = 1
[evaluation]
grid_resolution = 10
episodes = 4
"#
    ))
    .unwrap()
}

/// Small three-objective point-navigation run.
pub fn tiny_pointnav(total_steps: u64, seed: u64) -> TrainConfig {
    parse_config(&format!(
        r#"
schema_version = 1
[environment]
id = "mo-pointnav"
horizon = 8
metric = "squared"
[hypernet]
d = 3
embedding_hidden = [4]
policy_hidden = [4]
log_std_floor = -1.5
mean_bound = 0.25
[training]
total_steps = {total_steps}
alpha = 0.1
k = 4
eta = 1e-3
lr_schedule = "linear"
seed = {seed}
workers = 1
[evaluation]
grid_resolution = 4
episodes = 1
"#
    ))
    .unwrap()
}
