//! Exact duality engine on finite event trees.

mod barrier;
pub mod dual;
pub mod hedging;
pub mod polytope;
pub mod primal;
pub mod tree;
pub mod verify;

pub use dual::{
    dual_point_for_wealth, implied_wealth, pairing, solve_dual, solve_dual_full_mass, DualSolution, MeasureElement,
};
pub use hedging::{hedging_prices, superhedge, HedgingPrices, Superhedge};
pub use polytope::{martingale_polytope, MartingalePolytope};
pub use primal::{infeasibility_certificate, solve_primal, solve_primal_from, utility_value, PrimalSolution};
pub use tree::{EventTree, NodeId, NodeSpec, TreeFile};
pub use verify::{verify_duality, Check, DualityReport, VerifyTolerances};
