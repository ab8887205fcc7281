use bac::checkpoint;
use bac::config::OpponentSpec;
use bac::evaluate::{self, play_match};
use bac_core::env::BoardConfig;
use bac_core::mcts::SearchConfig;
use bac_core::nn::{AdamConfig, AdamState, Arch, NetworkParams};
use bac_core::opponents::{MctsAgent, StaticAgent};

fn random_checkpoint(dir: &std::path::Path) -> std::path::PathBuf {
    let params = NetworkParams::<f32>::init(Arch::narrow(6, 4, 16), 21);
    let adam = AdamState::new(&params, AdamConfig::default());
    let path = dir.join("init.bin");
    checkpoint::save(&path, &params, &adam).unwrap();
    path
}

#[test]
fn random_network_against_static_accounts_for_every_episode() {
    let tmp = tempfile::tempdir().unwrap();
    let ck = random_checkpoint(tmp.path());
    let s = evaluate::evaluate(&ck, &OpponentSpec::Static, 100, 4, Some(6)).unwrap();
    assert_eq!(s.episodes, 100);
    // Draws score -1 like losses, so every reward is +1 or -1.
    assert_eq!(s.wins + s.losses + s.draws, 100);
    assert_eq!(s.reward_sum, s.wins as i64 - (s.losses + s.draws) as i64);
    assert!((s.win_rate() + s.loss_rate() + s.draw_rate() - 1.0).abs() < 1e-12);
    assert_eq!(s.tags.iter().sum::<u64>(), 100);
}

#[test]
fn same_checkpoint_and_seed_give_the_same_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let ck = random_checkpoint(tmp.path());
    let a = evaluate::evaluate(&ck, &OpponentSpec::RuleBased, 15, 8, None).unwrap();
    let b = evaluate::evaluate(&ck, &OpponentSpec::RuleBased, 15, 8, None).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_string(), b.to_string());
}

#[test]
fn board_size_mismatch_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let ck = random_checkpoint(tmp.path());
    let err = evaluate::evaluate(&ck, &OpponentSpec::Static, 1, 0, Some(8)).unwrap_err();
    assert!(err.to_string().contains("dense.weight"), "{err}");
}

#[test]
fn deep_search_beats_static_on_clear_boards() {
    let mut agent = MctsAgent::new(SearchConfig::with_rollouts(2000));
    let s = play_match(&mut agent, &mut StaticAgent, &BoardConfig::clear(6), 20, 77).unwrap();
    assert!(s.win_rate() >= 0.8, "{s}");
}
