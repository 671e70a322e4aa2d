use std::fs;

use brownlab::lab::{replay, run_suite, ExperimentRecord, LabConfig, MetricValue, SUBCOMMANDS};
use brownlab::Error;

fn light_config(suite: &str) -> &'static str {
    match suite {
        "gn-solve" => "[gn]\nq = 3.0\n",
        "constants" => "[constants]\ngammas = [0.7]\n",
        "simulate" => "[simulate]\nreplicas = 12\neps = 0.07\n",
        "gibbs" => "[gibbs]\nt = 2.0\nsamples = 40\nburn_in = 10\nchains = 2\neps_sweep = [0.1]\n",
        "conditional" => "[conditional]\nlevel = 1e-6\n[conditional.gibbs]\nt = 2.0\nsamples = 40\nburn_in = 10\n",
        "verify-estimates" => {
            "[estimates]\ndims = [1]\nriesz_replicas = 500\n[estimates.sweep]\nt_range = [0.01, 100.0]\nr_range = [0.01, 100.0]\nnt = 6\nnr = 6\n"
        }
        "verify-dirichlet" => "[dirichlet]\ncases = 3\nsamples = 2000\nt = 1.3\n",
        "verify-scaling" => "[scaling]\nreplicas = 8\n",
        "verify-moments" => "[moments]\nreplicas = 6\nsteps = 1000\n",
        "metric-suite" => "[metric]\ntriples = 3\nseparations = [1, 2]\n",
        _ => unreachable!(),
    }
}

/// Bitwise equality, with NaN equal to itself.
fn same(a: &MetricValue, b: &MetricValue) -> bool {
    let bits = |v: Option<f64>| v.map(f64::to_bits);
    a.value.to_bits() == b.value.to_bits() && bits(a.error) == bits(b.error) && a.pass == b.pass
}

#[test]
fn replaying_records_read_back_from_disk_reproduces_every_metric() {
    for suite in SUBCOMMANDS {
        let mut cfg = LabConfig::parse(light_config(suite)).unwrap();
        cfg.set_seed(23);
        let mut out = run_suite(suite, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        out.write_to(dir.path(), 42).unwrap();
        let text = fs::read_to_string(dir.path().join("records.jsonl")).unwrap();
        let stored: Vec<ExperimentRecord> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(stored.len(), out.records.len(), "{suite}");
        for rec in &stored {
            let again = replay(rec).unwrap();
            let twin = again.records.iter().find(|r| r.name == rec.name).unwrap_or_else(|| panic!("{suite}: {} missing from {:?}", rec.name, again.records.iter().map(|r| &r.name).collect::<Vec<_>>()));
            assert_eq!(twin.id, rec.id, "{suite}/{}", rec.name);
            assert_eq!(twin.config, rec.config);
            assert_eq!(twin.artifacts, rec.artifacts);
            let orig = out.records.iter().find(|r| r.name == rec.name).unwrap();
            assert_eq!(twin.metrics.len(), orig.metrics.len());
            for (k, m) in &orig.metrics {
                assert!(same(m, &twin.metrics[k]), "{suite}/{}/{k}: {m:?} vs {:?}", rec.name, twin.metrics[k]);
            }
        }
    }
}

#[test]
fn records_are_self_describing() {
    let mut cfg = LabConfig::parse("seed = 5\n[dirichlet]\ncases = 2\nsamples = 500\n").unwrap();
    cfg.apply_override("dirichlet.t=2.5").unwrap();
    let out = run_suite("verify-dirichlet", &cfg).unwrap();
    let r = &out.records[0];
    assert_eq!(r.suite, "verify-dirichlet");
    assert_eq!(r.config["seed"], 5);
    assert_eq!(r.config["params"]["t"], 2.5);
    assert_eq!(r.config["params"]["samples"], 500);
    assert_eq!(r.id.len(), 16);
    assert!(!r.version.is_empty());
    let line = r.to_json_line();
    assert!(line.ends_with(",\"timestamp\":0}"), "{line}");
}

#[test]
fn configuration_errors_are_reported_as_such() {
    let cfg = |text: &str| LabConfig::parse(text);
    assert!(matches!(cfg("[gn\n"), Err(Error::Config(_))));
    let run = |text: &str, suite: &str| run_suite(suite, &cfg(text).unwrap());
    assert!(matches!(run("", "no-such-suite"), Err(Error::Config(_))));
    assert!(matches!(run("seed = -3\n", "gn-solve"), Err(Error::Config(_))));
    assert!(matches!(run("seed = \"one\"\n", "gn-solve"), Err(Error::Config(_))));
    assert!(matches!(run("[gn]\nqq = 2.0\n", "gn-solve"), Err(Error::Config(_))));
    assert!(matches!(run("[gn]\nq = \"two\"\n", "gn-solve"), Err(Error::Config(_))));
    assert!(matches!(run("gn = 3\n", "gn-solve"), Err(Error::Config(_))));
    let mut c = LabConfig::default();
    assert!(matches!(c.apply_override("gn.q"), Err(Error::Config(_))));
    c.apply_override("gn=1").unwrap();
    assert!(matches!(c.apply_override("gn.q=2.0"), Err(Error::Config(_))));
}
