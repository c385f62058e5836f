//! Bundled sample data: the worked-example instance and the toy lexicon.

/// Deep graph for "meanwhile , prices are thought to have increased .".
pub const FIG2_DEEP: &str = include_str!("../data/fig2.deep");

/// Gold realization for [`FIG2_DEEP`].
pub const FIG2_GOLD: &str = include_str!("../data/fig2.gold");

/// Toy inflection lexicon covering the synthetic vocabulary.
pub const TOY_LEXICON: &str = include_str!("../data/toy_lexicon.tsv");
