//! ARMA(1,1)-GJR-GARCH(1,1) on simulated returns, then Jensen and
//! three-factor alphas of the bundled stock.

use std::error::Error;
use std::path::Path;

use csylattice::factors::{
    ff3_alpha_series, fit_arma_gjr_garch, garch_residuals, jensen_alpha_series, load_factor_table,
    simulate_arma_gjr_garch, ArmaGjrGarchParams, GarchOptions, Innovation,
};
use csylattice::market_data::{load_price_series, load_rate_curve, log_returns, PriceSchema};

fn main() -> Result<(), Box<dyn Error>> {
    let truth = ArmaGjrGarchParams {
        mu: 2e-4,
        phi1: 0.1,
        theta1: -0.05,
        alpha0: 1e-5,
        alpha1: 0.1,
        beta1: 0.8,
        gamma1: 0.05,
        innovation: Innovation::Gaussian,
        dof: None,
    };
    let r = simulate_arma_gjr_garch(&truth, 5000, 500, 1)?;
    let fit = fit_arma_gjr_garch(&r, &GarchOptions::default())?;
    println!("GJR-GARCH fit, log-likelihood {:.2}", fit.log_likelihood);
    for e in &fit.estimates {
        println!("  {:<7} {:>11.6}  se {}", e.name, e.value, e.std_error.map_or("-".into(), |s| format!("{s:.6}")));
    }
    let eps = garch_residuals(&fit)?;
    let var = eps.iter().map(|e| e * e).sum::<f64>() / eps.len() as f64;
    println!("  standardized residual variance {var:.4}");

    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let stock = log_returns(&load_price_series(&root.join("stock_prices.csv"), &PriceSchema::default())?)?;
    let index = log_returns(&load_price_series(&root.join("index_prices.csv"), &PriceSchema::default())?)?;
    let rates = load_rate_curve(&root.join("rates.csv"))?;
    let jensen = jensen_alpha_series(&stock.dates, &stock.returns, &index.returns, &rates, 1.0 / 252.0)?;
    println!("\nJensen: intercept {:.2e}, beta {:.3}", jensen.intercept, jensen.betas[0]);

    let table = load_factor_table(&root.join("factors.csv"))?;
    let n = table.dates.len().min(stock.len());
    let ff3 = ff3_alpha_series(&stock.dates[stock.len() - n..], &stock.returns[stock.len() - n..], &table)?;
    for name in &ff3.factor_names {
        println!("FF3 beta {name}: {:.3}", ff3.beta(name).unwrap());
    }
    Ok(())
}
