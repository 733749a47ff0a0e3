//! Rolling upturn probabilities of the bundled index series, compared with
//! the CRR and JR implied probabilities and tested month by month.

use std::error::Error;
use std::path::Path;

use csylattice::market_data::{
    interval_sign_tests, load_price_series, load_rate_curve, log_returns, rolling_crr_jr, rolling_upturn_probability,
    sign_test_two_sided, Period, PriceSchema,
};

fn main() -> Result<(), Box<dyn Error>> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let prices = load_price_series(&root.join("index_prices.csv"), &PriceSchema::default())?;
    let rates = load_rate_curve(&root.join("rates.csv"))?;
    let returns = log_returns(&prices)?;
    println!("{} prices, {} log returns", prices.len(), returns.len());

    let window = 252;
    let est = rolling_upturn_probability(&returns, window)?;
    let implied = rolling_crr_jr(&returns, window, 1.0 / 252.0, &rates)?;
    println!("\nwindow end    p_hat   p_crr   p_jr");
    for (e, (_, u)) in est.iter().zip(&implied).step_by(60) {
        println!("{}  {:.4}  {:.4}  {:.4}", e.window_end, e.p_hat, u.p_crr, u.p_jr);
    }

    let last = est.last().unwrap();
    let p_value = sign_test_two_sided(last.n_up, last.n_total, 0.5)?;
    println!("\nlast window: {}/{} upturns, two-sided p-value vs 1/2 = {p_value:.4}", last.n_up, last.n_total);

    // Does p_hat sit above the CRR probability more often than chance?
    let dates: Vec<_> = est.iter().map(|e| e.window_end).collect();
    let p_hat: Vec<f64> = est.iter().map(|e| e.p_hat).collect();
    let p_crr: Vec<f64> = implied.iter().map(|(_, u)| u.p_crr).collect();
    let tests = interval_sign_tests(&dates, &p_hat, &p_crr, Period::Month)?;
    let rejected = tests.iter().filter(|t| t.p_value < 0.05).count();
    println!("monthly sign tests of p_hat = p_crr: {rejected}/{} reject at 5%", tests.len());
    Ok(())
}
