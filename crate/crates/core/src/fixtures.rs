//! Small deterministic corpora for tests, benches and the ablation driver.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::CorpusKind;
use crate::dialog::{Dialog, Origin, Passage, Role, Utterance};
use crate::segment::{segment_passage, RuleSegmenter};
use crate::trainer::TrainingCorpus;

const PASSAGES: [(&str, &str); 20] = [
    ("Grevillea rudis", "Grevillea rudis is a shrub native to the Wheatbelt region of Western Australia. The spreading shrub typically grows to a height of one metre. It has flat, irregularly lobed leaves with hairy undersides. It blooms sporadically throughout the year with cream or yellow flowers. The plant will regenerate from seed only."),
    ("Freeview", "Freeview is the digital terrestrial television platform in the United Kingdom. It carries channels from several public service broadcasters. Standard definition services use an older video codec. High definition services were added later with a newer codec. Viewers need a compatible receiver to watch them."),
    ("Honey bee", "The honey bee lives in large colonies ruled by a single queen. Worker bees collect nectar and pollen from flowers. Nectar is stored in wax cells and slowly turns into honey. Bees communicate the location of food through a waggle dance."),
    ("Lake Baikal", "Lake Baikal is a rift lake in southern Siberia. It is the deepest lake in the world. The lake holds roughly a fifth of the unfrozen fresh water on the planet. Many of its animals, including a freshwater seal, live nowhere else."),
    ("Printing press", "The movable type printing press appeared in Europe in the fifteenth century. Metal letters could be arranged, inked and pressed onto paper. Books became far cheaper to produce. Literacy spread quickly across cities with print shops."),
    ("Photosynthesis", "Photosynthesis converts light energy into chemical energy. Plants absorb carbon dioxide through small pores in their leaves. Chlorophyll captures light in the chloroplasts. Oxygen is released as a by-product of splitting water."),
    ("Volcano", "A volcano is an opening in the crust through which molten rock escapes. Pressure from gas dissolved in magma drives eruptions. Some volcanoes erupt explosively and throw ash high into the air. Others release slow rivers of lava."),
    ("Chess", "Chess is a strategy game played on a board of sixty-four squares. Each player starts with sixteen pieces. The goal is to checkmate the opposing king. Openings, middlegames and endgames each have their own theory."),
    ("Coral reef", "Coral reefs are built by colonies of tiny animals called polyps. The polyps secrete calcium carbonate skeletons. Algae living inside the coral provide most of its food. Warm water can cause the coral to expel the algae and bleach."),
    ("Silk Road", "The Silk Road was a network of trade routes linking China with the Mediterranean. Merchants carried silk, spices and precious metals along it. Ideas and religions travelled with the goods. Caravan cities grew wealthy from the traffic."),
    ("Penicillin", "Penicillin was one of the first antibiotics discovered. A mould contaminating a laboratory dish killed the surrounding bacteria. Mass production began during the Second World War. Overuse of antibiotics has since led to resistant bacteria."),
    ("Sourdough", "Sourdough bread is leavened by wild yeast and lactic acid bacteria. Bakers keep a starter that is fed with flour and water. The bacteria give the bread its tangy flavour. Long fermentation also makes the crust darker and thicker."),
    ("Glacier", "A glacier is a persistent body of dense ice that moves under its own weight. Snow accumulates over many years and compresses into ice. Glaciers carve valleys into a distinctive U shape. Most glaciers around the world are currently shrinking."),
    ("Lighthouse", "A lighthouse is a tower with a bright lamp that guides ships at night. Each lighthouse flashes in a unique pattern. Lenses focus the light into a strong beam. Many lighthouses are now automated and have no keeper."),
    ("Octopus", "The octopus is a soft-bodied animal with eight arms. It can change the colour and texture of its skin in an instant. Octopuses solve puzzles and open jars to reach food. Most species live for only one or two years."),
    ("Railway gauge", "Railway gauge is the distance between the two rails of a track. Standard gauge is used on most lines in Europe and North America. Broad gauge lines are common in parts of Asia. Trains cannot easily cross between networks with different gauges."),
    ("Saffron", "Saffron is a spice harvested from the flowers of a crocus. Each flower yields only three thin red threads. The threads are picked by hand and dried carefully. Saffron is therefore one of the most expensive spices by weight."),
    ("Aurora", "An aurora is a natural light display in the sky near the poles. Charged particles from the sun strike gases in the upper atmosphere. Oxygen produces green and red light. Nitrogen adds blue and purple tones."),
    ("Windmill", "A windmill converts the energy of wind into rotational motion. Traditional windmills ground grain into flour. Dutch windmills also pumped water out of low fields. Modern wind turbines generate electricity instead."),
    ("Tea ceremony", "The Japanese tea ceremony is a ritual preparation of powdered green tea. The host cleans each utensil in front of the guests. Guests bow and turn the bowl before drinking. Every gesture follows a set order learned over years."),
];

/// Twenty short encyclopedic passages, ids `p00`..`p19`.
pub fn fixture_passages() -> Vec<Passage> {
    let seg = RuleSegmenter::default();
    PASSAGES
        .iter()
        .enumerate()
        .map(|(i, (title, text))| {
            segment_passage(&format!("p{i:02}"), text, title, &seg).expect("fixture passage segments")
        })
        .collect()
}

const CONVQA: [(&str, &[&str]); 10] = [
    ("Honey bee", &[
        "How do bees make honey?", "Nectar is stored in wax cells and slowly turns into honey.",
        "Who rules the colony?", "A single queen rules the colony.",
        "How do bees tell each other where food is?", "They perform a waggle dance.",
    ]),
    ("Lake Baikal", &[
        "Where is Lake Baikal?", "It is a rift lake in southern Siberia.",
        "How deep is it?", "It is the deepest lake in the world.",
        "Are there any unusual animals there?", "Yes, a freshwater seal lives only there.",
    ]),
    ("Chess", &[
        "How many squares does a chess board have?", "A chess board has sixty-four squares.",
        "What is the goal of the game?", "The goal is to checkmate the opposing king.",
        "How many pieces does each player get?", "Each player starts with sixteen pieces.",
    ]),
    ("Coral reef", &[
        "What builds a coral reef?", "Colonies of tiny animals called polyps build reefs.",
        "Where does coral get its food?", "Algae living inside the coral provide most of its food.",
        "Why does coral bleach?", "Warm water makes the coral expel its algae.",
    ]),
    ("Penicillin", &[
        "How was penicillin discovered?", "A mould on a laboratory dish killed nearby bacteria.",
        "When did mass production start?", "Mass production began during the Second World War.",
        "Is there a downside to antibiotics?", "Overuse has produced resistant bacteria.",
    ]),
    ("Sourdough", &[
        "What makes sourdough rise?", "Wild yeast and lactic acid bacteria leaven the dough.",
        "Why does it taste sour?", "The bacteria give the bread a tangy flavour.",
        "What is a starter?", "A starter is a culture fed with flour and water.",
    ]),
    ("Glacier", &[
        "How does a glacier form?", "Snow builds up over years and compresses into ice.",
        "What shape of valley does it carve?", "Glaciers carve valleys into a U shape.",
        "Are glaciers growing?", "Most glaciers are currently shrinking.",
    ]),
    ("Octopus", &[
        "How many arms does an octopus have?", "An octopus has eight arms.",
        "Can it change colour?", "It changes the colour and texture of its skin instantly.",
        "How long do octopuses live?", "Most species live for one or two years.",
    ]),
    ("Saffron", &[
        "Where does saffron come from?", "Saffron comes from the flowers of a crocus.",
        "Why is it so expensive?", "Each flower yields only three threads picked by hand.",
        "What colour are the threads?", "The threads are thin and red.",
    ]),
    ("Aurora", &[
        "What causes an aurora?", "Charged particles from the sun strike gases in the upper atmosphere.",
        "Which gas makes the green light?", "Oxygen produces green and red light.",
        "Where can you see one?", "Auroras appear in the sky near the poles.",
    ]),
];

/// Ten hand-written conversational QA dialogs, ids `cq0`..`cq9`.
pub fn fixture_convqa_dialogs() -> Vec<Dialog> {
    CONVQA
        .iter()
        .enumerate()
        .map(|(i, (title, turns))| {
            let mut d = Dialog::alternating(format!("cq{i}"), Role::User, turns);
            d.title = Some(title.to_string());
            d
        })
        .collect()
}

const SUBJECTS: [&str; 12] = [
    "river", "castle", "festival", "engine", "forest", "library", "harbour", "comet", "orchard",
    "bridge", "market", "telescope",
];
const VERBS: [&str; 8] = ["was built", "is visited", "was repaired", "is described", "was mapped", "is protected", "was painted", "is studied"];
const MODIFIERS: [&str; 10] = [
    "in the old town", "by local students", "every spring", "after the storm", "near the coast",
    "during the war", "for many decades", "at great expense", "with careful planning", "by a small team",
];

/// `n` synthetic conversational QA dialogs with 2 to 5 question turns each.
pub fn synthetic_convqa_dialogs(n: usize, seed: u64) -> Vec<Dialog> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let pairs = rng.gen_range(2..=5);
            let mut texts = Vec::with_capacity(pairs * 2);
            let mut subjects = SUBJECTS.to_vec();
            subjects.shuffle(&mut rng);
            for s in subjects.iter().take(pairs) {
                let verb = VERBS.choose(&mut rng).unwrap();
                let modifier = MODIFIERS.choose(&mut rng).unwrap();
                texts.push(format!("What about the {s}?"));
                texts.push(format!("The {s} {verb} {modifier}."));
            }
            let mut d = Dialog::alternating(format!("syn{i:03}"), Role::User, &texts);
            d.title = Some(format!("Topic {i}"));
            d
        })
        .collect()
}

/// Open-domain chit-chat with agent-first and odd-length dialogs mixed in.
pub fn synthetic_open_dialogs(n: usize, seed: u64) -> Vec<Dialog> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    (0..n)
        .map(|i| {
            let len = rng.gen_range(3..=7);
            let first = if rng.gen_bool(0.5) { Role::User } else { Role::Agent };
            let texts: Vec<String> = (0..len)
                .map(|_| {
                    let s = SUBJECTS.choose(&mut rng).unwrap();
                    let m = MODIFIERS.choose(&mut rng).unwrap();
                    format!("I saw the {s} {m}.")
                })
                .collect();
            Dialog::alternating(format!("open{i:03}"), first, &texts)
        })
        .collect()
}

/// The ten fixture dialogs as a ConvQA training corpus.
pub fn fixture_training_corpus() -> TrainingCorpus {
    TrainingCorpus::new("fixture-convqa", CorpusKind::ConvqaDialog, fixture_convqa_dialogs())
}

/// A generated dialog: model-written questions, answers taken verbatim from a Wikipedia passage.
pub fn grevillea() -> Dialog {
    let turns = [
        "Where is Grevillea rudis found?",
        "Grevillea rudis Grevillea rudis is a shrub of the genus \"Grevillea\" native to an area along the west coast in the Wheatbelt region of Western Australia.",
        "How tall is the shrub?",
        "The loose, spreading to erect shrub typically grows to a height of and has non-glaucous branchlets.",
        "How do the leaves of the shrub Grevillea rudis look like?",
        "It has simple flat, spathulate, irregularly lobed leaves with a blade that is long and wide.",
        "How often does the shrub Grevillea rudis bloom?",
        "It blooms sporadically throughout the year and produces a terminal raceme regular inflorescence with cream or yellow flowers and white or cream styles.",
        "What kind of fruit does the shrub Grevillea rudis produce?",
        "Later it forms obovoid or ellipsoidal glandular hairy fruit that is long.",
        "How does the shrub Grevillea rudis regenerate?",
        "It will regenerate from seed only.",
    ];
    let utterances = turns
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if i % 2 == 0 {
                Utterance::new(Role::User, t, Origin::Generated)
            } else {
                Utterance::new(Role::Agent, t, Origin::SourceSentence)
            }
        })
        .collect();
    let mut d = Dialog::new("wikidialog2-grevillea-rudis", utterances);
    d.title = Some("Grevillea rudis".into());
    d.source_passage_id = Some("grevillea-rudis".into());
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialog::validate_dialog;

    #[test]
    fn passages_segment_cleanly() {
        let ps = fixture_passages();
        assert_eq!(ps.len(), 20);
        assert!(ps.iter().all(|p| (4..=5).contains(&p.sentences.len())), "{:?}",
            ps.iter().map(|p| p.sentences.len()).collect::<Vec<_>>());
    }

    #[test]
    fn dialogs_are_valid() {
        for d in fixture_convqa_dialogs().iter().chain(&synthetic_convqa_dialogs(100, 0)) {
            assert!(validate_dialog(d).is_empty(), "{}", d.id);
            assert!(d.qa_pairs().len() >= 2);
        }
        assert_eq!(synthetic_convqa_dialogs(5, 3), synthetic_convqa_dialogs(5, 3));
    }
}
