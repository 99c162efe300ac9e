#![no_main]

use libfuzzer_sys::fuzz_target;
use telegraph_core::filter::run_filter_with_sensitivities;
use telegraph_core::model::{ParameterDomain, StateSpace, ThetaParams};
use telegraph_core::moments::estimate_moments;
use telegraph_core::sim::ObservationPath;

fuzz_target!(|data: &[u8]| {
    let Ok(path) = ObservationPath::read_csv(data) else {
        return;
    };
    // Anything the reader accepts must be safe to filter and estimate from.
    let theta = ThetaParams::new(1.0, 1.0).unwrap();
    let states = StateSpace::new(0.0, 1.0).unwrap();
    let domain = ParameterDomain::new(0.1, 5.0).unwrap();
    if let Ok(traj) = run_filter_with_sensitivities(&theta, &states, &path) {
        assert!(traj.pi.iter().all(|p| (0.0..=1.0).contains(p)));
    }
    let _ = estimate_moments(&path, &states, &domain);

    let mut out = Vec::new();
    path.write_csv(&mut out).unwrap();
    let back = ObservationPath::read_csv(out.as_slice()).unwrap();
    assert_eq!(back.len(), path.len());
});
