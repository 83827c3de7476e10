use uav_isac::orchestrator::{BaselineKind, SweepAxis, TrajectoryMode};
use uav_isac_py::{parse_axis, parse_baseline, parse_mode};

#[test]
fn option_strings() {
    assert_eq!(parse_mode("frozen").unwrap(), TrajectoryMode::Frozen);
    assert_eq!(parse_mode("proposed").unwrap(), TrajectoryMode::Ddpg);
    assert_eq!(parse_baseline("random-policy").unwrap(), BaselineKind::RandomPolicy);
    assert_eq!(parse_baseline("twobf").unwrap(), BaselineKind::Twobf);
    assert_eq!(parse_axis("pmax").unwrap(), SweepAxis::Pmax);
}
