use serde::{Deserialize, Serialize};

use super::MlError;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Splits<R> {
    pub train: Vec<R>,
    pub validation: Vec<R>,
    pub test: Vec<R>,
    /// Names of the splits that came out empty.
    pub empty: Vec<&'static str>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl<R> Splits<R> {
    pub fn sizes(&self) -> SplitSizes {
        SplitSizes {
            train: self.train.len(),
            validation: self.validation.len(),
            test: self.test.len(),
        }
    }
}

/// `date < b1` trains, `b1 <= date < b2` validates, the rest tests.
/// Order within each split follows the input.
pub fn split_by_date<R>(
    records: impl IntoIterator<Item = R>,
    date_of: impl Fn(&R) -> i64,
    (b1, b2): (i64, i64),
) -> Result<Splits<R>, MlError> {
    if b1 > b2 {
        return Err(MlError::Config(format!("split boundaries {b1} > {b2}")));
    }
    let mut s = Splits {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
        empty: Vec::new(),
    };
    for r in records {
        let d = date_of(&r);
        if d < b1 {
            s.train.push(r);
        } else if d < b2 {
            s.validation.push(r);
        } else {
            s.test.push(r);
        }
    }
    for (name, n) in [("train", s.train.len()), ("validation", s.validation.len()), ("test", s.test.len())] {
        if n == 0 {
            log::warn!("split {name} is empty");
            s.empty.push(name);
        }
    }
    Ok(s)
}
