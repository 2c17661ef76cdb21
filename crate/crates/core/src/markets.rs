//! Negotiation venues: rate-seeking delegation and a continuous double
//! auction with price-time priority.

use std::cmp::Reverse;
use std::collections::BTreeMap;

use thiserror::Error;

use crate::rate::Rate;

/// Advertised deposit rate per bank host, per year.
pub type RateBoard = BTreeMap<String, Rate>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RateChoice {
    Move(String),
    Stay,
}

/// Picks the bank with the highest advertised rate, ties going to the
/// lexicographically smallest id. Money held outside any listed bank earns
/// nothing, so it moves only for a strictly positive rate; money already at
/// a listed bank moves only for a strict improvement.
pub fn select_best_rate(board: &RateBoard, current: Option<&str>) -> RateChoice {
    // BTreeMap iterates ids in ascending order; keep the first maximum.
    let mut best: Option<(&String, Rate)> = None;
    for (bank, &rate) in board {
        if best.is_none_or(|(_, r)| rate > r) {
            best = Some((bank, rate));
        }
    }
    let Some((bank, rate)) = best else {
        return RateChoice::Stay;
    };
    let baseline = current.and_then(|c| board.get(c)).copied().unwrap_or(Rate::ZERO);
    if rate > baseline && current != Some(bank.as_str()) {
        RateChoice::Move(bank.clone())
    } else {
        RateChoice::Stay
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Bid,
    Ask,
}

impl std::str::FromStr for Side {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "BID" => Ok(Side::Bid),
            "ASK" => Ok(Side::Ask),
            _ => Err(format!("unknown side `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Order {
    pub side: Side,
    pub price: u64,
    pub qty: u64,
    pub owner: String,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Trade {
    pub price: u64,
    pub qty: u64,
    pub buyer: String,
    pub seller: String,
    pub at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MarketError {
    #[error("invalid order: {0}")]
    InvalidOrder(String),
}

/// Resting orders. Bids are keyed so that iteration yields the highest
/// price first; both sides break price ties by arrival sequence.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Book {
    bids: BTreeMap<(Reverse<u64>, u64), Order>,
    asks: BTreeMap<(u64, u64), Order>,
    last_seq: Option<u64>,
}

impl Book {
    pub fn new() -> Self {
        Self::default()
    }

    /// Resting bids in priority order.
    pub fn bids(&self) -> impl Iterator<Item = &Order> {
        self.bids.values()
    }

    /// Resting asks in priority order.
    pub fn asks(&self) -> impl Iterator<Item = &Order> {
        self.asks.values()
    }

    pub fn best_bid(&self) -> Option<&Order> {
        self.bids.values().next()
    }

    pub fn best_ask(&self) -> Option<&Order> {
        self.asks.values().next()
    }

    pub fn is_empty(&self) -> bool {
        self.bids.is_empty() && self.asks.is_empty()
    }

    /// Matches `order` against the opposite side while prices cross, at the
    /// resting order's price. Any remainder rests in the book.
    pub fn submit(&mut self, mut order: Order, at: u64) -> Result<Vec<Trade>, MarketError> {
        if order.price == 0 || order.qty == 0 {
            return Err(MarketError::InvalidOrder("price and qty must be positive".into()));
        }
        if self.last_seq.is_some_and(|s| order.seq <= s) {
            return Err(MarketError::InvalidOrder(format!(
                "sequence {} is not after {}",
                order.seq,
                self.last_seq.unwrap_or_default()
            )));
        }
        self.last_seq = Some(order.seq);

        let mut trades = Vec::new();
        match order.side {
            Side::Bid => {
                while order.qty > 0 {
                    let Some(mut entry) = self.asks.first_entry() else { break };
                    let resting = entry.get_mut();
                    if resting.price > order.price {
                        break;
                    }
                    let qty = order.qty.min(resting.qty);
                    trades.push(Trade {
                        price: resting.price,
                        qty,
                        buyer: order.owner.clone(),
                        seller: resting.owner.clone(),
                        at,
                    });
                    order.qty -= qty;
                    resting.qty -= qty;
                    if resting.qty == 0 {
                        entry.remove();
                    }
                }
                if order.qty > 0 {
                    self.bids.insert((Reverse(order.price), order.seq), order);
                }
            }
            Side::Ask => {
                while order.qty > 0 {
                    let Some(mut entry) = self.bids.first_entry() else { break };
                    let resting = entry.get_mut();
                    if resting.price < order.price {
                        break;
                    }
                    let qty = order.qty.min(resting.qty);
                    trades.push(Trade {
                        price: resting.price,
                        qty,
                        buyer: resting.owner.clone(),
                        seller: order.owner.clone(),
                        at,
                    });
                    order.qty -= qty;
                    resting.qty -= qty;
                    if resting.qty == 0 {
                        entry.remove();
                    }
                }
                if order.qty > 0 {
                    self.asks.insert((order.price, order.seq), order);
                }
            }
        }
        Ok(trades)
    }
}

/// Pure form of [`Book::submit`]: returns the new book and the trades.
pub fn cda_submit(book: &Book, order: Order, at: u64) -> Result<(Book, Vec<Trade>), MarketError> {
    let mut next = book.clone();
    let trades = next.submit(order, at)?;
    Ok((next, trades))
}
