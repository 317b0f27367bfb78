//! Online causal bidding in repeated second-price auctions.
//!
//! A bidder observes a context, bids, and sees the outcome of its own
//! decision only: winning reveals the highest other bid (through the
//! payment) and the outcome with the ad shown, losing reveals the outcome
//! without it. The value worth paying for is the difference between the two
//! outcomes, which is never observed for a single round. This crate
//! estimates that difference jointly with the distribution of the highest
//! other bid, bids optimistically with respect to both, and provides the
//! environments and experiment harness needed to measure the regret.

pub mod auction;
pub mod calibration;
pub mod envs;
pub mod error;
pub mod harness;
pub mod hob_cdf;
pub mod master;
pub mod practical;
pub mod ucb;
pub mod value_est;

pub use auction::{
    run_auction, AuctionFeedback, BidGrid, Branch, Context, Decision, HobParams, Policy, SimRng,
};
pub use calibration::Calibration;
pub use error::{BidError, Result};
