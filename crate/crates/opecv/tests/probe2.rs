//! Deeper diagnosis of selection behavior on the ecoli stand-in.

mod common;

use common::standin_problem;
use opecv::estimators::{EstimatorSpec};
use opecv::rng::Seed;
use opecv::selection::{ocv_select, OcvOptions};

#[test]
#[ignore]
fn probe_ecoli_choice_breakdown() {
    let candidates = vec![EstimatorSpec::ips(), EstimatorSpec::dm(), EstimatorSpec::dr()];
    let names = ["IPS", "DM", "DR"];
    let mut chosen_counts = [0usize; 3];
    let mut worst_counts = [0usize; 3];
    let mut joint = [[0usize; 3]; 3]; // [worst][chosen]
    let mut sum_weights_max = 0.0f64;
    for run in 0..100u64 {
        let problem = standin_problem("ecoli", 1.0, 10.0, Seed::new(200).child(run));
        let result = ocv_select(
            &problem.logged,
            &problem.target,
            Some(&problem.logging),
            &candidates,
            &EstimatorSpec::dr(),
            &OcvOptions::default(),
            Seed::new(201).child(run),
        )
        .unwrap();
        let tv = problem.true_value;
        let losses: Vec<f64> = result
            .candidates
            .iter()
            .map(|c| (c.full_estimate - tv) * (c.full_estimate - tv))
            .collect();
        let worst = losses.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        chosen_counts[result.chosen_index] += 1;
        worst_counts[worst] += 1;
        joint[worst][result.chosen_index] += 1;

        let weights =
            opecv::policy::propensity_weights(&problem.target, &problem.logged).unwrap();
        sum_weights_max += weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if run < 5 {
            println!(
                "run {run}: tv {tv:.4} losses {:?} fractions {:?} chosen {}",
                losses
                    .iter()
                    .map(|l| format!("{l:.2e}"))
                    .collect::<Vec<_>>(),
                result
                    .candidates
                    .iter()
                    .map(|c| c.split_fraction.unwrap())
                    .collect::<Vec<_>>(),
                names[result.chosen_index]
            );
        }
    }
    println!("chosen: IPS {} DM {} DR {}", chosen_counts[0], chosen_counts[1], chosen_counts[2]);
    println!("worst:  IPS {} DM {} DR {}", worst_counts[0], worst_counts[1], worst_counts[2]);
    println!("joint worst->chosen: {joint:?}");
    println!("avg max weight: {}", sum_weights_max / 100.0);
}
