//! Color-refinement index for free-connex acyclic conjunctive queries over
//! binary schemas.
//!
//! Build a [`ColorIndex`] once per database, then plan queries with
//! [`QueryPlan::new`] and answer them with [`eval_boolean`], [`count`] or
//! [`enumerate`]. Evaluation works on the color database, whose size depends
//! on the number of color classes rather than on the number of facts.
//!
//! ```
//! use colorindex::{count, load_database, parse_query, ColorIndex, QueryPlan};
//!
//! let db = load_database("R(1,2)\nR(2,3)\nR(3,1)\n", None).unwrap();
//! let idx = ColorIndex::build(&db);
//! assert_eq!(idx.num_colors(), 1);
//!
//! let q = parse_query("Ans(x,y) <- R(x,y).").unwrap();
//! let plan = QueryPlan::new(&q, idx.sigma1()).unwrap();
//! assert_eq!(count(&idx, &plan), 3u32.into());
//! ```

pub mod cde;
pub mod eval;
pub mod exec;
pub mod gen;
pub mod graph;
pub mod index;
pub mod model;
pub mod oracle;
pub mod plan;
pub mod refine;

pub use eval::{count, count_with, enumerate, eval_boolean, Enumeration, EvalError};
pub use exec::ExecMode;
pub use graph::{EdgeLabel, LabelAtom, LabeledGraph, Sigma1};
pub use index::{ColorIndex, IndexError, IndexStats};
pub use model::{load_database, parse_query, ConjunctiveQuery, Database, Schema};
pub use oracle::{naive_count, naive_eval, ResultSet};
pub use plan::{check_free_connex_acyclic, FcViolation, PlanError, QueryPlan};
pub use refine::{is_stable, naive_refine, refine, Coloring, Stability};
