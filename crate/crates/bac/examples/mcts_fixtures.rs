//! Regenerates `tests/fixtures/mcts_positions.txt`:
//!
//! cargo run --release -p bac --example mcts_fixtures > crates/bac/tests/fixtures/mcts_positions.txt

use bac::fixtures;

fn main() {
    let positions = fixtures::generate(25, 6, 2024);
    print!("{}", fixtures::to_text(&positions));
}
