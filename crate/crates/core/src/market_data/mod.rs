//! Market quotes: validation, spread ratios, the Black-Scholes pricer and a
//! synthetic quote generator standing in for historical data.

mod csv_io;
mod pricing;
mod snapshot;
mod synthetic;

pub use csv_io::{read_market_csv, write_market_csv, IngestReport, MarketRow, TradingCalendar};
pub use pricing::{bs_price, norm_cdf};
pub use snapshot::{
    spread_ratios, validate_snapshot, MarketSnapshot, SpreadRatios, OPTION_SPREAD_OBSERVED_MAX,
    STOCK_SPREAD_OBSERVED_MAX,
};
pub use synthetic::{simulate_market, SyntheticMarketConfig, TRADING_DAYS_PER_YEAR};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("invalid quote for option {option_id} on day {date}: {reason}")]
    InvalidQuote {
        option_id: String,
        date: i64,
        reason: String,
    },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid synthetic market config: {0}")]
    Config(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("bad date {value:?}: {source}")]
    Date {
        value: String,
        source: chrono::ParseError,
    },
}
