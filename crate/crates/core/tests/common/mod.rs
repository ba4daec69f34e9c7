#![allow(dead_code)]

use std::path::{Path, PathBuf};

use serde_json::{json, Value};

pub fn maxima() -> Value {
    json!({"noise_percent_max": 50, "linear_max": 0.5, "log_max": 0.5, "log_k1_range": [0.5, 2.0], "scale_max": 2.0})
}

pub fn synth_source(seed: u64) -> Value {
    json!({"type": "synth", "config": {
        "channels": 6, "length": 2000, "train_length": 1500, "seed": seed,
        "anomalies": [
            {"type": "mean_shift", "channels": [1], "start": 400, "duration": 100, "magnitude": 8},
            {"type": "stuck_sensor", "channels": [3], "start": 1300, "duration": 150}
        ]
    }})
}

pub fn config(seed: u64) -> Value {
    json!({
        "name": "itest",
        "seed": 5,
        "dataset": {"name": "synth-itest", "source": synth_source(seed)},
        "windows": {"length": 8, "stride": 2},
        "detector": {"kind": "gde", "mode": "diagonal"},
        "stress": {
            "kinds": ["noise", "zero_channels", "failure_and_scale"],
            "severities": [0.0, 1.0],
            "seeds": [1, 2],
            "maxima": maxima(),
            "compositions": [{
                "name": "drop+shift",
                "children": [{"kind": "linear_drift", "level": 0.4}, {"kind": "zero_channels", "level": 1.0}],
                "mask_seeds": [1, 2]
            }]
        },
        "probing": {"enabled": true},
        "metrics": {"latency_window_s": 30, "nab_tolerance_s": 60}
    })
}

pub fn write(dir: &Path, name: &str, v: &Value) -> PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

pub fn only_run_dir(root: &Path) -> PathBuf {
    let dirs: Vec<PathBuf> = std::fs::read_dir(root).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1, "expected one run directory in {}", root.display());
    dirs[0].clone()
}
