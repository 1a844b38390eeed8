//! Per-group statistics and the four fairness scores on a toy prediction set.

use dpfair::fairmetrics::{self, group_stats, RiskField};

fn main() -> dpfair::Result<()> {
    let names = vec!["young".to_string(), "old".to_string(), "other".to_string()];
    let labels = [true, true, false, false, true, false, true, false, true, false];
    let preds = [true, false, false, false, true, true, true, true, false, false];
    let groups = [0, 0, 0, 1, 1, 1, 2, 2, 2, 2];

    let stats = group_stats(&preds, &labels, &groups, &names)?;
    for g in &stats.groups {
        println!(
            "{:<6} n={} prior={:.2} positive_rate={:.2} risk={:.2} f1={:.2}",
            g.name, g.count, g.label_prior, g.positive_rate, g.risk, g.f1
        );
    }
    println!("accuracy         {:.4}", fairmetrics::accuracy(&preds, &labels));
    println!("unequal risk     {:.4}", fairmetrics::unequal_risk(&stats, RiskField::ZeroOne)?);
    println!("unequal risk F1  {:.4}", fairmetrics::unequal_risk(&stats, RiskField::OneMinusF1)?);
    println!("delta variance   {:.4}", fairmetrics::delta_variance(&stats)?);
    println!("p-rule           {:.4}", fairmetrics::p_rule(&stats)?);
    match fairmetrics::modified_p_rule(&stats) {
        Ok(v) => println!("modified p-rule  {v:.4}"),
        Err(e) => println!("modified p-rule  undefined ({e})"),
    }
    Ok(())
}
