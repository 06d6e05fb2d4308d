use batmobile::config::{MobilityModel, ScenarioConfig};
use batmobile::experiment::{self, RunOptions, SweepSpec};
use batmobile::routing::Protocol;
use batmobile::sim::{Outcome, Simulation};
use batmobile::channel::ChannelModel;
use batmobile::NodeId;
use serde_json::json;

/// Base at the area center on the ground, agents strung out east of it
/// 150 m apart. Range under the default channel is about 195 m, so only
/// consecutive nodes hear each other.
fn chain(agents: usize) -> ScenarioConfig {
    let mut c = ScenarioConfig::desk_scale();
    c.agents = agents;
    c.duration = 20.0;
    c.traffic.start_time = 8.0;
    c.area.x = 2000.0;
    c.mobility.model = MobilityModel::Static;
    c.mobility.initial_positions =
        Some((1..=agents).map(|k| [1000.0 + 150.0 * k as f64, 250.0, 0.0]).collect());
    c.traffic.source = Some(agents as u32);
    c
}

#[test]
fn static_chain_routes_hop_by_hop() {
    for protocol in [Protocol::Batmobile, Protocol::BatmanBaseline] {
        let mut cfg = chain(4);
        cfg.protocol = protocol;
        let mut sim = Simulation::new(&cfg, 3).unwrap();
        sim.run_until(8.0);
        for k in 1..=4u32 {
            assert_eq!(
                sim.routing_node(NodeId(k)).select_next_hop(NodeId::BASE),
                Some(NodeId(k - 1)),
                "{protocol} node {k}"
            );
        }
        assert_eq!(sim.deliver_app_packet(NodeId(4), NodeId::BASE), Outcome::Delivered);
        let r = sim.finish();
        assert!(r.packets_sent > 0);
        assert_eq!(r.mean_pdr, 1.0, "{protocol}");
    }
}

#[test]
fn one_meter_link_is_perfect_and_twice_range_is_dead() {
    let mut cfg = chain(1);
    cfg.mobility.initial_positions = Some(vec![[1001.0, 250.0, 0.0]]);
    assert_eq!(batmobile::run(&cfg, 1).unwrap().mean_pdr, 1.0);

    let d_max = batmobile::channel::max_range(&cfg.channel).unwrap();
    cfg.mobility.initial_positions = Some(vec![[1000.0 + 2.0 * d_max, 250.0, 0.0]]);
    let r = batmobile::run(&cfg, 1).unwrap();
    assert!(r.packets_sent > 0);
    assert_eq!(r.mean_pdr, 0.0);
}

#[test]
fn series_weighted_mean_matches_run_mean() {
    let mut cfg = ScenarioConfig::desk_scale();
    cfg.duration = 120.0;
    cfg.channel.model = ChannelModel::Nakagami;
    let r = batmobile::run(&cfg, 3).unwrap();
    let sent: u64 = r.pdr_series.iter().map(|p| p.sent).sum();
    assert_eq!(sent, r.packets_sent);
    let weighted = r.pdr_series.iter().map(|p| p.pdr * p.sent as f64).sum::<f64>() / sent as f64;
    assert!((weighted - r.mean_pdr).abs() <= 1e-12);
}

#[test]
fn trajectory_dump_matches_speed_limit() {
    let cfg = ScenarioConfig { duration: 10.0, ..ScenarioConfig::desk_scale() };
    let mut sim = Simulation::new(&cfg, 2).unwrap();
    sim.record_trajectories();
    sim.run_to_end();
    let csv = sim.trajectory_csv();
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), cfg.agents * 41);
    let step = cfg.mobility.velocity_mps() * cfg.mobility.update_interval;
    for agent in 1..=cfg.agents {
        let track: Vec<&Vec<f64>> = rows.iter().filter(|r| r[1] == agent as f64).collect();
        for w in track.windows(2) {
            let d = ((w[1][2] - w[0][2]).powi(2) + (w[1][3] - w[0][3]).powi(2) + (w[1][4] - w[0][4]).powi(2)).sqrt();
            assert!(d <= step + 1e-9);
        }
    }
}

#[test]
fn out_of_range_source_has_no_route() {
    let mut cfg = chain(2);
    cfg.mobility.initial_positions = Some(vec![[1150.0, 250.0, 0.0], [1900.0, 250.0, 0.0]]);
    let r = batmobile::run(&cfg, 1).unwrap();
    assert_eq!(r.packets_delivered, 0);
    assert_eq!(r.packets_dropped_no_route, r.packets_sent);
}

#[test]
fn routing_table_dump_lists_buffers() {
    let mut sim = Simulation::new(&chain(3), 5).unwrap();
    sim.run_until(10.0);
    let rows = sim.routing_table(NodeId(2));
    let to_base = rows.iter().find(|r| r.destination == NodeId::BASE).unwrap();
    assert_eq!(to_base.neighbor, NodeId(1));
    assert_eq!(to_base.buffer.len(), 8);
    let mean = to_base.buffer.iter().sum::<f64>() / 8.0;
    assert!((to_base.score - mean).abs() < 1e-12);
}

#[test]
fn zero_duration_sends_nothing() {
    let mut cfg = ScenarioConfig::desk_scale();
    cfg.duration = 0.0;
    let r = batmobile::run(&cfg, 1).unwrap();
    assert_eq!(r.packets_sent, 0);
    assert_eq!(r.mean_pdr, 1.0);
    assert!(r.pdr_series.is_empty());
}

#[test]
fn seeds_change_outcomes() {
    let mut cfg = ScenarioConfig::desk_scale();
    cfg.duration = 60.0;
    let a = batmobile::run(&cfg, 1).unwrap();
    let b = batmobile::run(&cfg, 2).unwrap();
    assert_ne!(a.to_json(), b.to_json());
}

#[test]
fn fading_drops_packets_on_a_static_chain() {
    let mut cfg = chain(3);
    cfg.channel.model = ChannelModel::Nakagami;
    let r = batmobile::run(&cfg, 9).unwrap();
    assert!(r.mean_pdr < 1.0);
    assert!(r.packets_dropped_channel > 0);
}

fn small_sweep() -> SweepSpec {
    let mut base = ScenarioConfig::desk_scale();
    base.duration = 30.0;
    SweepSpec {
        base,
        parameter: "gnss.max_error".into(),
        values: vec![json!(0.0), json!(60.0)],
        seeds: Some(3),
        protocols: vec![Protocol::Batmobile, Protocol::BatmanBaseline],
    }
}

#[test]
fn sweep_csv_is_reproducible_across_worker_counts() {
    let spec = small_sweep();
    let one = experiment::run_sweep(&spec, &RunOptions { jobs: 1, out_dir: None }).unwrap();
    let two = experiment::run_sweep(&spec, &RunOptions { jobs: 2, out_dir: None }).unwrap();
    assert_eq!(one.to_csv(), two.to_csv());
    assert_eq!(one.rows.len(), 4);
    assert_eq!(one.rows[0].param_value, "0.0");
    assert!(one.rows.iter().all(|r| r.mean_pdr.is_finite() && r.ci_low <= r.ci_high));
}

#[test]
fn persisted_runs_reaggregate_to_the_same_table() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_sweep();
    let out =
        experiment::run_sweep(&spec, &RunOptions { jobs: 0, out_dir: Some(dir.path().into()) })
            .unwrap();
    let runs = experiment::load_runs(dir.path()).unwrap();
    assert_eq!(runs.len(), 12);
    let again = experiment::aggregate(&runs);
    assert_eq!(again.len(), out.rows.len());
    for (a, b) in again.iter().zip(&out.rows) {
        assert_eq!((&a.param_value, a.protocol, a.n), (&b.param_value, b.protocol, b.n));
        for (x, y) in [(a.mean_pdr, b.mean_pdr), (a.std, b.std), (a.ci_low, b.ci_low), (a.ci_high, b.ci_high)] {
            assert!((x - y).abs() <= 1e-9);
        }
    }
}

#[test]
fn comparison_reports_channel_drop() {
    let mut base = ScenarioConfig::desk_scale();
    base.duration = 30.0;
    let cmp = experiment::compare_protocols(
        &base,
        &[Protocol::Batmobile, Protocol::BatmanBaseline],
        2,
        &RunOptions::default(),
    )
    .unwrap();
    assert_eq!(cmp.rows.len(), 4);
    for d in &cmp.deltas {
        let f = cmp.row(ChannelModel::Friis, d.protocol).unwrap().mean_pdr;
        let n = cmp.row(ChannelModel::Nakagami, d.protocol).unwrap().mean_pdr;
        assert!((d.pdr_drop - (f - n)).abs() < 1e-15);
    }
    assert!(cmp.deltas_csv().starts_with("protocol,friis_mean_pdr,nakagami_mean_pdr,pdr_drop\n"));
}
