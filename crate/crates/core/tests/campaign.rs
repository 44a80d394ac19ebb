use dmimo::montecarlo::{read_csv, run_campaign, ExperimentConfig, Mode, Stopping, UsersConfig};

fn small(mode: Mode, snr_db: Vec<f64>) -> ExperimentConfig {
    let mut c = ExperimentConfig::single_user(mode, 2, 16, 1, snr_db);
    c.seed = 3;
    c.stopping = Stopping {
        min_errors: 100,
        max_trials: 8192,
        batch: 1024,
    };
    c
}

fn multiuser(snr_db: Vec<f64>) -> ExperimentConfig {
    let mut c = small(Mode::MultiuserDl, snr_db);
    c.k_r = 1;
    c.n_r = 8;
    c.users = Some(UsersConfig {
        count: 2,
        rf_chains: None,
    });
    c
}

#[test]
fn curve_survives_csv_round_trip() {
    let cfg = small(Mode::SingleUserFc, vec![0.0, 6.0, 12.0]);
    let curve = run_campaign(&cfg).unwrap();
    let parsed = read_csv(curve.to_csv_string().as_bytes()).unwrap();
    assert_eq!(parsed.config_hash, cfg.hash());
    assert_eq!(parsed.seed, 3);
    assert_eq!(parsed.rows.len(), curve.points.len());
    for (row, p) in parsed.rows.iter().zip(&curve.points) {
        assert_eq!(row.snr_db, p.snr_db);
        assert_eq!(row.ber, p.ber);
        assert_eq!(row.errors, p.errors);
        assert_eq!(row.trials, p.trials);
    }
}

#[test]
fn ber_falls_with_snr_in_every_mode() {
    for cfg in [
        small(Mode::SingleUserFc, vec![0.0, 30.0]),
        small(Mode::SingleUserPc, vec![0.0, 30.0]),
        multiuser(vec![0.0, 30.0]),
    ] {
        let curve = run_campaign(&cfg).unwrap();
        let (lo, hi) = (&curve.points[0], &curve.points[1]);
        assert!(lo.ber > 0.05, "{:?}: {}", cfg.mode, lo.ber);
        assert!(hi.ber < lo.ber / 5.0, "{:?}: {} vs {}", cfg.mode, hi.ber, lo.ber);
    }
}

#[test]
fn noiseless_links_detect_every_bit() {
    for mut cfg in [
        small(Mode::SingleUserFc, vec![0.0]),
        small(Mode::SingleUserPc, vec![0.0]),
        multiuser(vec![0.0]),
    ] {
        cfg.noiseless = true;
        cfg.stopping.max_trials = 256;
        cfg.stopping.batch = 256;
        let p = &run_campaign(&cfg).unwrap().points[0];
        assert_eq!(p.errors, 0, "{:?}", cfg.mode);
        assert!(p.capped);
    }
}

#[test]
fn seed_selects_the_realizations() {
    let a = small(Mode::SingleUserFc, vec![4.0]);
    let mut b = a.clone();
    b.seed = 4;
    let ca = run_campaign(&a).unwrap();
    assert_eq!(ca, run_campaign(&a).unwrap());
    assert_ne!(ca.points, run_campaign(&b).unwrap().points);
}
