use allocbench_core::corpus::Stage;
use allocbench_core::synth::{generate_deals, PowerLaw, SynthConfig};

fn background_multiples(cfg: &SynthConfig) -> Vec<f64> {
    generate_deals(cfg)
        .unwrap()
        .deals
        .into_iter()
        .filter(|d| d.deal.investor_id.starts_with("bg_"))
        .map(|d| d.deal.multiple)
        .collect()
}

#[test]
fn zero_share_and_lognormal_part_are_recovered() {
    let cfg = SynthConfig { seed: 23, p0: 0.25, mu: 0.3, sigma: 0.7, ..SynthConfig::default() };
    let m = background_multiples(&cfg);
    let n = m.len() as f64;
    let p0 = m.iter().filter(|&&x| x == 0.0).count() as f64 / n;
    assert!((p0 - cfg.p0).abs() <= 3.0 * (cfg.p0 * (1.0 - cfg.p0) / n).sqrt(), "p0 {p0}");

    let logs: Vec<f64> = m.iter().filter(|&&x| x > 0.0).map(|x| x.ln()).collect();
    let k = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / k;
    let var = logs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
    assert!((mean - cfg.mu).abs() <= 3.0 * cfg.sigma / k.sqrt(), "mu {mean}");
    // SE of the sample SD of a normal sample is sigma / sqrt(2(k-1))
    assert!((var.sqrt() - cfg.sigma).abs() <= 3.0 * cfg.sigma / (2.0 * (k - 1.0)).sqrt(), "sigma {}", var.sqrt());
}

#[test]
fn stages_are_independent_corpora() {
    let cfg = SynthConfig { seed: 4, investors: 20, stages: Stage::ALL.to_vec(), ..SynthConfig::default() };
    let c = generate_deals(&cfg).unwrap();
    for stage in Stage::ALL {
        let deals: Vec<_> = c.deals.iter().filter(|d| d.deal.stage == stage).collect();
        assert!(deals.iter().all(|d| d.deal.company_id.starts_with(stage.token())));
        assert_eq!(deals.iter().filter(|d| d.deal.investor_id.starts_with("bg_")).count(), cfg.strata() * cfg.companies_per_stratum);
    }
    assert_eq!(c.truth.investors.len(), 3 * cfg.investors);
}

#[test]
fn portfolio_sizes_follow_the_power_law_bounds() {
    let cfg = SynthConfig { seed: 8, deals_per_investor: PowerLaw { min: 3, max: 6, alpha: 1.5 }, ..SynthConfig::default() };
    let c = generate_deals(&cfg).unwrap();
    assert!(c.truth.investors.iter().all(|t| (3..=6).contains(&t.deals)));
    let sizes: Vec<usize> = c.truth.investors.iter().map(|t| t.deals).collect();
    let share3 = sizes.iter().filter(|&&s| s == 3).count() as f64 / sizes.len() as f64;
    let z: f64 = (3..=6).map(|n| (n as f64).powf(-1.5)).sum();
    let expect = 3f64.powf(-1.5) / z;
    let se = (expect * (1.0 - expect) / sizes.len() as f64).sqrt();
    assert!((share3 - expect).abs() <= 3.0 * se, "{share3} vs {expect}");
}

#[test]
fn skilled_investors_pick_better_companies() {
    let base = SynthConfig { seed: 2, investors: 200, ..SynthConfig::default() };
    let mean_of = |cfg: &SynthConfig| {
        let c = generate_deals(cfg).unwrap();
        let m: Vec<f64> = c.deals.iter().filter(|d| !d.deal.investor_id.starts_with("bg_")).map(|d| d.deal.multiple).collect();
        m.iter().sum::<f64>() / m.len() as f64
    };
    assert!(mean_of(&SynthConfig { skill: 3.0, ..base.clone() }) > mean_of(&base) + 0.5);
}
