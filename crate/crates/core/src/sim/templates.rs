//! Bundled scenario files.

use super::scenario::Scenario;

pub const NAMES: &[&str] = &["table1", "turntable", "p10"];

const TABLE1: &str = r#"# Five moving parents and three moving children over 60 s.
# Slots are 1 ms, so one frame of five slots gives 200 Hz estimates.

num_parents = 5
num_children = 3
slot_interval = 0.001      # s
duration = 60.0            # s
seed = 42

[clock]
s_nT = 4.7e-20                              # offset noise spectrum
s_nW = 7.5e-20                              # skew noise spectrum
initial_offset = { uniform = [-5e-7, 5e-7] }  # s
initial_skew_ppm = { uniform = [-5.0, 5.0] }

[radio]
xi = 1.5e-10               # timestamp noise std, s (4.5 cm)
loss_prob = 0.0
airtime = 0.0003           # s

[estimator]
init_cov = [0.1, 1.0]
reference_parent = 1

# parent 1 is the static origin, parent 2 runs along the x axis;
# children loop at about 1 m/s on the inner side of their start points
[[parent]]
trajectory = { kind = "static", at = [0.0, 0.0] }

[[parent]]
trajectory = { kind = "waypoints", points = [[40.0, 0.0], [70.0, 0.0], [40.0, 0.0]], speed = 1.0 }

[[parent]]
trajectory = { kind = "circular", center = [36.0, 56.4], radius = 4.0, rate = 0.25, phase = 0.0 }

[[parent]]
trajectory = { kind = "circular", center = [8.0, 42.5], radius = 5.0, rate = -0.2, phase = 0.0 }

[[parent]]
trajectory = { kind = "circular", center = [50.0, 12.0], radius = 3.0, rate = 0.3, phase = 1.5707963267948966 }

[[child]]
trajectory = { kind = "circular", center = [26.8, 25.0], radius = 6.0, rate = 0.18, phase = 0.0 }

[[child]]
trajectory = { kind = "circular", center = [6.0, 30.0], radius = 4.0, rate = 0.25, phase = 3.141592653589793 }

[[child]]
trajectory = { kind = "circular", center = [35.0, 20.0], radius = 5.0, rate = -0.2, phase = 0.0 }
"#;

const TURNTABLE: &str = r#"# Four static parents around a 5 m x 7 m area and two children on
# opposite ends of a 1.733 m diameter turntable.

num_parents = 4
num_children = 2
slot_interval = 0.001
duration = 60.0
seed = 42

[clock]
s_nT = 4.7e-20
s_nW = 7.5e-20
initial_offset = { uniform = [-5e-7, 5e-7] }
initial_skew_ppm = { uniform = [-5.0, 5.0] }

[radio]
xi = 1.5e-10
airtime = 0.0003

[[parent]]
trajectory = { kind = "static", at = [0.0, 0.0] }

[[parent]]
trajectory = { kind = "static", at = [5.0, 0.0] }

[[parent]]
trajectory = { kind = "static", at = [5.0, 7.0] }

[[parent]]
trajectory = { kind = "static", at = [0.0, 7.0] }

[[child]]
trajectory = { kind = "circular", center = [2.5, 3.5], radius = 0.8665, rate = 0.14, phase = 0.0 }

[[child]]
trajectory = { kind = "circular", center = [2.5, 3.5], radius = 0.8665, rate = 0.14, phase = 3.141592653589793 }
"#;

const P10: &str = r#"# Ten parents at 1 ms slots: 100 Hz frames.

num_parents = 10
num_children = 3
slot_interval = 0.001
duration = 60.0
seed = 42

[clock]
s_nT = 4.7e-20
s_nW = 7.5e-20
initial_offset = { uniform = [-5e-7, 5e-7] }
initial_skew_ppm = { uniform = [-5.0, 5.0] }

[radio]
xi = 1.5e-10
airtime = 0.0003

[[parent]]
trajectory = { kind = "static", at = [0.0, 0.0] }

[[parent]]
trajectory = { kind = "waypoints", points = [[40.0, 0.0], [70.0, 0.0], [40.0, 0.0]], speed = 1.0 }

[[parent]]
trajectory = { kind = "circular", center = [36.0, 56.4], radius = 4.0, rate = 0.25, phase = 0.0 }

[[parent]]
trajectory = { kind = "circular", center = [8.0, 42.5], radius = 5.0, rate = -0.2, phase = 0.0 }

[[parent]]
trajectory = { kind = "circular", center = [50.0, 12.0], radius = 3.0, rate = 0.3, phase = 1.5707963267948966 }

[[parent]]
trajectory = { kind = "static", at = [65.0, 40.0] }

[[parent]]
trajectory = { kind = "circular", center = [25.0, 65.0], radius = 4.0, rate = 0.2, phase = 0.0 }

[[parent]]
trajectory = { kind = "static", at = [-10.0, 25.0] }

[[parent]]
trajectory = { kind = "static", at = [30.0, -12.0] }

[[parent]]
trajectory = { kind = "circular", center = [55.0, 55.0], radius = 3.0, rate = -0.25, phase = 0.0 }

[[child]]
trajectory = { kind = "circular", center = [26.8, 25.0], radius = 6.0, rate = 0.18, phase = 0.0 }

[[child]]
trajectory = { kind = "circular", center = [6.0, 30.0], radius = 4.0, rate = 0.25, phase = 3.141592653589793 }

[[child]]
trajectory = { kind = "circular", center = [35.0, 20.0], radius = 5.0, rate = -0.2, phase = 0.0 }
"#;

/// Commented TOML text of a bundled scenario.
pub fn text(name: &str) -> Option<&'static str> {
    match name {
        "table1" => Some(TABLE1),
        "turntable" => Some(TURNTABLE),
        "p10" => Some(P10),
        _ => None,
    }
}

pub fn scenario(name: &str) -> Option<Scenario> {
    text(name).map(|t| Scenario::from_toml_str(t).expect("bundled template is valid"))
}
