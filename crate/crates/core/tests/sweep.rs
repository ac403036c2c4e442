// temporary tuning harness; run with: cargo test --release --test sweep -- --ignored --nocapture
use nifs_core::boxcount::cross_check;
use nifs_core::config::RunConfig;
use nifs_core::targets::*;

fn sweep(config: &str, b: f64, schedules: &[Vec<usize>]) {
    let cfg = RunConfig::from_str_toml(&std::fs::read_to_string(config).unwrap()).unwrap();
    let system = cfg.system.build().unwrap();
    let beta = cfg.beta.build().unwrap();
    let contraction = nifs_core::conditions::verify_contraction(&system, 8).unwrap();
    let targets = nifs_core::conditions::verify_targets(&system, &beta, 8, &[0.0, 0.5, 1.0]).unwrap();
    let h = nifs_core::conditions::attractor_dimension(&system, 1e-9, 16).unwrap().h;
    let ahl = nifs_core::conditions::ahlfors_suite(&system, h, 10, 64, 12, 42).unwrap();
    let constants = MoranConstants {
        theta: contraction.theta,
        alpha_lo: targets.alpha_lo,
        alpha_hi: targets.alpha_hi,
        ahlfors_c: ahl.empirical_c,
        h,
        pressure_at_t: None,
        growth_const: 1.0,
    };
    println!("== {config}: C = {:.3}, h = {:.4}, b = {:.4}", ahl.empirical_c, h, b);
    for ns in schedules {
        let sched = moran_schedule(
            constants,
            MoranVariant::GrowthChecked {
                n1: ns[0],
                rules: GrowthRules::dichotomy_and_nonempty(),
                supplied: Some(ns.clone()),
            },
            ns.len(),
        );
        let sched = match sched {
            Ok(s) => s,
            Err(e) => {
                println!("  {ns:?}: schedule rejected: {e}");
                continue;
            }
        };
        let setup = TargetSetup::prepare(&system, &beta, *ns.last().unwrap()).unwrap();
        let tree = match build_moran_tree(&setup, sched, 1 << 22, 42) {
            Ok(t) => t,
            Err(e) => {
                println!("  {ns:?}: build failed: {e}");
                continue;
            }
        };
        let leaves = tree.leaves().len();
        let points = sample_target_points(&tree, 10_000, 42);
        let depth = *tree.schedule.levels.last().unwrap();
        let kb = system.kappa_bounds(depth, 0).unwrap();
        let lo = kb.log_hi(depth).exp();
        let hi = kb.log_hi(tree.schedule.levels[0]).exp();
        let cc = cross_check(&tree, lo, hi, b, &points).unwrap();
        println!(
            "  {ns:?}: leaves = {leaves}, slope = {:.4}, gap = {:.4}",
            cc.slope.unwrap(),
            cc.gap.unwrap()
        );
    }
}

#[test]
#[ignore]
fn sweep_schedules() {
    let b_cantor = 2.0f64.ln() / (2.0 * 3.0f64.ln());
    sweep(
        "../../configs/cantor.toml",
        b_cantor,
        &[
            vec![2, 6, 18],
            vec![2, 7, 19],
            vec![3, 8, 24],
            vec![3, 8, 25],
            vec![3, 8, 26],
            vec![3, 9, 26],
            vec![4, 10, 28],
            vec![4, 10, 29],
        ],
    );
    sweep(
        "../../configs/base3_full.toml",
        0.5,
        &[
            vec![1, 4, 11],
            vec![1, 4, 12],
            vec![1, 5, 13],
            vec![2, 5, 14],
            vec![2, 5, 15],
            vec![2, 5, 16],
            vec![2, 6, 16],
            vec![2, 6, 17],
        ],
    );
}
