//! Exact communication and storage accounting in value-units.
//!
//! One value-unit is the size of one object value. A coded element of an
//! `(n, k)` code is `1/k` of a unit; tags and other metadata count as zero.

use num_rational::Ratio;
use num_traits::Zero;
use serde::{Deserialize, Deserializer, Serializer};

pub type Cost = Ratio<u64>;

pub fn zero() -> Cost {
    Cost::zero()
}

pub fn units(n: u64) -> Cost {
    Cost::from_integer(n)
}

/// Renders as `p/q`, or `p` when the denominator is one.
pub fn format_cost(c: &Cost) -> String {
    if *c.denom() == 1 {
        c.numer().to_string()
    } else {
        format!("{}/{}", c.numer(), c.denom())
    }
}

pub fn parse_cost(s: &str) -> Option<Cost> {
    let s = s.trim();
    match s.split_once('/') {
        Some((p, q)) => {
            let q: u64 = q.trim().parse().ok()?;
            if q == 0 {
                return None;
            }
            Some(Cost::new(p.trim().parse().ok()?, q))
        }
        None => s.parse().ok().map(Cost::from_integer),
    }
}

/// serde adapter storing a [`Cost`] as its `p/q` string.
pub mod cost_str {
    use super::*;

    pub fn serialize<S: Serializer>(c: &Cost, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_cost(c))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Cost, D::Error> {
        let raw = String::deserialize(d)?;
        parse_cost(&raw).ok_or_else(|| serde::de::Error::custom(format!("bad cost `{raw}`")))
    }
}

pub mod opt_cost_str {
    use super::*;

    pub fn serialize<S: Serializer>(c: &Option<Cost>, s: S) -> Result<S::Ok, S::Error> {
        match c {
            Some(c) => s.serialize_str(&format_cost(c)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Cost>, D::Error> {
        let raw = Option::<String>::deserialize(d)?;
        raw.map(|r| {
            parse_cost(&r).ok_or_else(|| serde::de::Error::custom(format!("bad cost `{r}`")))
        })
        .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn format_and_parse() {
        assert_eq!(format_cost(&Cost::new(10, 6)), "5/3");
        assert_eq!(format_cost(&units(5)), "5");
        assert_eq!(parse_cost("5/3"), Some(Cost::new(5, 3)));
        assert_eq!(parse_cost("10"), Some(units(10)));
        assert_eq!(parse_cost("1/0"), None);
        assert_eq!(parse_cost("x"), None);
    }
}
