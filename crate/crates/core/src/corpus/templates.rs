//! Built-in gazetteers and biography templates for the corpus generator.
//!
//! Every biography embeds exactly one first name (PER) and one city (LOC)
//! drawn from the lists below, plus gendered pronouns. The neutral variant of
//! the same template drops the name, keeps the city and uses neutral
//! pronouns. Templates are written in past tense so pronoun substitution
//! never needs verb re-inflection, and their prose avoids capitalized tokens
//! after locative prepositions or personal titles so the rule-based tagger
//! produces no false positives on generated text.

use crate::anonymizer::{EntityLabel, EntitySpan};
use crate::corpus::Gender;

/// Male first-name gazetteer. Disjoint from the female list and the cities.
pub fn male_names() -> &'static [&'static str] {
    &[
        "Mateo", "Lucas", "Henrik", "Omar", "Tariq", "Ivan", "Pavel", "Andrei", "Stefan", "Milos",
        "Janos", "Luca", "Marco", "Diego", "Rafael", "Joaquin", "Emilio", "Bruno", "Goran",
        "Viktor", "Anton", "Boris", "Dmitri", "Karim", "Yusuf", "Hamid", "Samir", "Farid",
        "Ahmed", "Idris", "Kwame", "Sven", "Bjorn", "Anders", "Lars", "Niels", "Klaus", "Dieter",
        "Helmut", "Gunnar", "Tobias", "Mathias", "Fabio", "Dario", "Enzo", "Theo", "Cormac",
        "Declan", "Ronan", "Padraig", "Hugo", "Felix", "Oscar", "Leon", "Emil", "Jonas", "Aleksi",
        "Timo", "Casimir", "Aurelio",
    ]
}

/// Female first-name gazetteer. Disjoint from the male list and the cities.
pub fn female_names() -> &'static [&'static str] {
    &[
        "Elena", "Sofia", "Ingrid", "Fatima", "Aisha", "Clara", "Lucia", "Nadia", "Amira", "Zara",
        "Leila", "Yasmin", "Carmen", "Pilar", "Rosa", "Marta", "Irene", "Alba", "Noor", "Dalia",
        "Petra", "Hana", "Ivana", "Milena", "Tatiana", "Oksana", "Svetlana", "Katarina", "Magda",
        "Zofia", "Agata", "Freya", "Astrid", "Sigrid", "Maja", "Linnea", "Greta", "Heidi",
        "Anneli", "Kirsten", "Paula", "Bianca", "Chiara", "Alessia", "Giulia", "Noemi", "Livia",
        "Teresa", "Ines", "Beatriz", "Camila", "Valentina", "Renata", "Silvia", "Veronika",
        "Eszter", "Ilona", "Anouk", "Maeve", "Saoirse",
    ]
}

/// City gazetteer. Single-token entries only; includes non-ASCII names so
/// code-point offsets get exercised end to end.
pub fn city_names() -> &'static [&'static str] {
    &[
        "Madrid", "Lisbon", "Porto", "Seville", "Valencia", "Bilbao", "Málaga", "Toulouse",
        "Lyon", "Marseille", "Bordeaux", "Geneva", "Zürich", "Basel", "Vienna", "Salzburg",
        "Prague", "Brno", "Krakow", "Warsaw", "Gdansk", "Budapest", "Zagreb", "Ljubljana",
        "Belgrade", "Bucharest", "Athens", "Thessaloniki", "Oslo", "Bergen", "Stockholm",
        "Gothenburg", "Helsinki", "Tampere", "Copenhagen", "Aarhus", "Dublin", "Cork", "Galway",
        "Edinburgh", "Glasgow", "Rotterdam", "Utrecht", "Antwerp", "Ghent", "Hamburg", "Leipzig",
        "Dresden",
    ]
}

/// Indices kept out of the built-in tagger's gazetteer (one name in five),
/// forcing rule-based detection for those names during tagger evaluation.
pub(crate) fn is_heldout_name(index: usize) -> bool {
    index % 5 == 4
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Part {
    Lit(&'static str),
    /// Subject introduction: `[title ]name` in the raw text, a generic
    /// subject in the neutral text.
    Intro,
    City,
    Subj,
    SubjCap,
    Obj,
    Poss,
    Years,
}

pub(crate) struct Template {
    pub title: Option<&'static str>,
    pub parts: &'static [Part],
}

const NEUTRAL_SUBJECT: &str = "This candidate";

use Part::*;

static O1_TEMPLATES: [Template; 4] = [
    Template {
        title: Some("Dr"),
        parts: &[
            Intro,
            Lit(" spent "),
            Years,
            Lit(" years in clinical practice at a regional hospital near "),
            City,
            Lit(". "),
            SubjCap,
            Lit(" specialised in intensive care and "),
            Poss,
            Lit(" colleagues valued "),
            Poss,
            Lit(" calm judgement on the ward. Earlier "),
            Subj,
            Lit(" completed nursing training and volunteered in community health clinics."),
        ],
    },
    Template {
        title: None,
        parts: &[
            Intro,
            Lit(" worked as a physiotherapist in "),
            City,
            Lit(" for "),
            Years,
            Lit(" years. "),
            SubjCap,
            Lit(" led rehabilitation programmes for surgical patients, and "),
            Poss,
            Lit(" clinic praised "),
            Obj,
            Lit(" for excellent patient outcomes. In spare hours "),
            Subj,
            Lit(" mentored junior therapists."),
        ],
    },
    Template {
        title: None,
        parts: &[
            Intro,
            Lit(" practised hospital pharmacy for "),
            Years,
            Lit(" years before moving to "),
            City,
            Lit(". "),
            SubjCap,
            Lit(" reviewed medication plans on acute wards and "),
            Subj,
            Lit(" trained nurses in safe dosage procedures. Patients remembered "),
            Obj,
            Lit(" for clear, reassuring advice."),
        ],
    },
    Template {
        title: Some("Dr"),
        parts: &[
            Intro,
            Lit(" coordinated emergency admissions at a teaching hospital in "),
            City,
            Lit(". Over "),
            Years,
            Lit(" years "),
            Subj,
            Lit(" triaged thousands of patients, and "),
            Poss,
            Lit(" supervisors rated "),
            Poss,
            Lit(" clinical documentation as exemplary."),
        ],
    },
];

static O2_TEMPLATES: [Template; 4] = [
    Template {
        title: Some("Prof"),
        parts: &[
            Intro,
            Lit(" taught secondary mathematics for "),
            Years,
            Lit(" years at a school in "),
            City,
            Lit(". "),
            SubjCap,
            Lit(" designed the curriculum for advanced students and "),
            Poss,
            Lit(" lessons earned consistent praise from the faculty. Later "),
            Subj,
            Lit(" supervised trainee teachers."),
        ],
    },
    Template {
        title: Some("Prof"),
        parts: &[
            Intro,
            Lit(" lectured in medieval history at a university in "),
            City,
            Lit(" for "),
            Years,
            Lit(" years. "),
            SubjCap,
            Lit(" published research on early trade routes and "),
            Poss,
            Lit(" seminars drew large student audiences. Colleagues praised "),
            Obj,
            Lit(" for rigorous scholarship."),
        ],
    },
    Template {
        title: None,
        parts: &[
            Intro,
            Lit(" ran the library reading programme in "),
            City,
            Lit(" for "),
            Years,
            Lit(" years. "),
            SubjCap,
            Lit(" tutored struggling pupils after classes and "),
            Subj,
            Lit(" organised examinations for adult learners. Parents valued "),
            Poss,
            Lit(" patient teaching style."),
        ],
    },
    Template {
        title: None,
        parts: &[
            Intro,
            Lit(" developed online courses for vocational students near "),
            City,
            Lit(". Across "),
            Years,
            Lit(" years "),
            Subj,
            Lit(" wrote lecture notes, graded thousands of assignments, and "),
            Poss,
            Lit(" tutorials became a model for the whole faculty."),
        ],
    },
];

static O3_TEMPLATES: [Template; 4] = [
    Template {
        title: None,
        parts: &[
            Intro,
            Lit(" reported for a regional newspaper based in "),
            City,
            Lit(" for "),
            Years,
            Lit(" years. "),
            SubjCap,
            Lit(" covered municipal politics and "),
            Poss,
            Lit(" editors trusted "),
            Obj,
            Lit(" with front page investigations. Readers knew "),
            Obj,
            Lit(" for sharp headlines."),
        ],
    },
    Template {
        title: None,
        parts: &[
            Intro,
            Lit(" produced morning radio broadcasts in "),
            City,
            Lit(". Over "),
            Years,
            Lit(" years "),
            Subj,
            Lit(" booked interviews, edited tape under deadline, and "),
            Poss,
            Lit(" newsroom colleagues relied on "),
            Poss,
            Lit(" calm voice during breaking coverage."),
        ],
    },
    Template {
        title: None,
        parts: &[
            Intro,
            Lit(" worked as a press officer for a cultural venue in "),
            City,
            Lit(" for "),
            Years,
            Lit(" years. "),
            SubjCap,
            Lit(" drafted media statements and "),
            Subj,
            Lit(" coordinated documentary crews, while "),
            Poss,
            Lit(" briefings kept journalists well informed."),
        ],
    },
    Template {
        title: None,
        parts: &[
            Intro,
            Lit(" edited the weekend supplement of a daily published in "),
            City,
            Lit(". For "),
            Years,
            Lit(" years "),
            Subj,
            Lit(" managed freelance reporters, and "),
            Poss,
            Lit(" editorial judgement shaped the broadcast desk and the paper alike."),
        ],
    },
];

static O4_TEMPLATES: [Template; 4] = [
    Template {
        title: None,
        parts: &[
            Intro,
            Lit(" practised commercial law in "),
            City,
            Lit(" for "),
            Years,
            Lit(" years. "),
            SubjCap,
            Lit(" drafted contracts for mid-sized firms and "),
            Poss,
            Lit(" clients valued "),
            Poss,
            Lit(" careful reading of statutes. In court "),
            Subj,
            Lit(" argued with precision."),
        ],
    },
    Template {
        title: None,
        parts: &[
            Intro,
            Lit(" served as in-house counsel for a logistics company near "),
            City,
            Lit(". Over "),
            Years,
            Lit(" years "),
            Subj,
            Lit(" handled compliance reviews, and "),
            Poss,
            Lit(" colleagues relied on "),
            Obj,
            Lit(" during contract negotiations and hearings."),
        ],
    },
    Template {
        title: Some("Dr"),
        parts: &[
            Intro,
            Lit(" worked "),
            Years,
            Lit(" years as a litigation associate in "),
            City,
            Lit(". "),
            SubjCap,
            Lit(" prepared briefs for arbitration panels and "),
            Subj,
            Lit(" examined witnesses, while "),
            Poss,
            Lit(" meticulous case files impressed senior partners."),
        ],
    },
    Template {
        title: None,
        parts: &[
            Intro,
            Lit(" advised families on property disputes from an office in "),
            City,
            Lit(". Across "),
            Years,
            Lit(" years "),
            Subj,
            Lit(" settled most matters before trial, and "),
            Poss,
            Lit(" measured counsel kept "),
            Poss,
            Lit(" clients out of costly hearings."),
        ],
    },
];

pub(crate) fn templates_for_group(group_index: usize) -> &'static [Template; 4] {
    match group_index {
        0 => &O1_TEMPLATES,
        1 => &O2_TEMPLATES,
        2 => &O3_TEMPLATES,
        3 => &O4_TEMPLATES,
        _ => unreachable!("group index out of range"),
    }
}

pub(crate) struct RenderedBio {
    pub raw: String,
    pub neutral: String,
    pub person_span: EntitySpan,
    pub location_span: EntitySpan,
}

fn pronouns(gender: Gender) -> (&'static str, &'static str, &'static str, &'static str) {
    match gender {
        Gender::Male => ("he", "He", "him", "his"),
        Gender::Female => ("she", "She", "her", "her"),
    }
}

/// Render both biography variants in one pass, recording code-point spans of
/// the injected name and city in the raw text.
pub(crate) fn render_bio(
    template: &Template,
    name: &str,
    city: &str,
    gender: Gender,
    years: u32,
) -> RenderedBio {
    let (subj, subj_cap, obj, poss) = pronouns(gender);
    let mut raw = String::new();
    let mut neutral = String::new();
    let mut raw_cp = 0usize;
    let mut person_span = None;
    let mut location_span = None;

    let push_raw = |raw: &mut String, raw_cp: &mut usize, s: &str| {
        raw.push_str(s);
        *raw_cp += s.chars().count();
    };

    for part in template.parts {
        match part {
            Part::Lit(s) => {
                push_raw(&mut raw, &mut raw_cp, s);
                neutral.push_str(s);
            }
            Part::Intro => {
                if let Some(title) = template.title {
                    push_raw(&mut raw, &mut raw_cp, title);
                    push_raw(&mut raw, &mut raw_cp, " ");
                }
                let start = raw_cp;
                push_raw(&mut raw, &mut raw_cp, name);
                person_span = Some(EntitySpan::new(start, raw_cp, EntityLabel::Per));
                neutral.push_str(NEUTRAL_SUBJECT);
            }
            Part::City => {
                let start = raw_cp;
                push_raw(&mut raw, &mut raw_cp, city);
                location_span = Some(EntitySpan::new(start, raw_cp, EntityLabel::Loc));
                neutral.push_str(city);
            }
            Part::Subj => {
                push_raw(&mut raw, &mut raw_cp, subj);
                neutral.push_str("they");
            }
            Part::SubjCap => {
                push_raw(&mut raw, &mut raw_cp, subj_cap);
                neutral.push_str("They");
            }
            Part::Obj => {
                push_raw(&mut raw, &mut raw_cp, obj);
                neutral.push_str("them");
            }
            Part::Poss => {
                push_raw(&mut raw, &mut raw_cp, poss);
                neutral.push_str("their");
            }
            Part::Years => {
                let rendered = years.to_string();
                push_raw(&mut raw, &mut raw_cp, &rendered);
                neutral.push_str(&rendered);
            }
        }
    }

    RenderedBio {
        raw,
        neutral,
        person_span: person_span.expect("template must contain an Intro part"),
        location_span: location_span.expect("template must contain a City part"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gazetteers_are_disjoint_and_nonempty() {
        let m: std::collections::BTreeSet<_> = male_names().iter().collect();
        let f: std::collections::BTreeSet<_> = female_names().iter().collect();
        let c: std::collections::BTreeSet<_> = city_names().iter().collect();
        assert_eq!(m.len(), male_names().len());
        assert_eq!(f.len(), female_names().len());
        assert_eq!(c.len(), city_names().len());
        assert!(m.is_disjoint(&f));
        assert!(m.is_disjoint(&c));
        assert!(f.is_disjoint(&c));
    }

    #[test]
    fn rendered_spans_slice_back_to_the_injected_tokens() {
        for gi in 0..4 {
            for tpl in templates_for_group(gi) {
                let bio = render_bio(tpl, "Elena", "Zürich", Gender::Female, 12);
                let chars: Vec<char> = bio.raw.chars().collect();
                let name: String = chars[bio.person_span.start..bio.person_span.end]
                    .iter()
                    .collect();
                let city: String = chars[bio.location_span.start..bio.location_span.end]
                    .iter()
                    .collect();
                assert_eq!(name, "Elena");
                assert_eq!(city, "Zürich");
            }
        }
    }

    #[test]
    fn neutral_variant_has_no_names_or_gendered_tokens() {
        let gendered = ["he", "she", "him", "her", "his", "hers", "mr", "mrs", "ms"];
        for gi in 0..4 {
            for tpl in templates_for_group(gi) {
                for gender in [Gender::Male, Gender::Female] {
                    let bio = render_bio(tpl, "Mateo", "Madrid", gender, 8);
                    for word in bio.neutral.split_whitespace() {
                        let clean: String = word
                            .chars()
                            .filter(|c| c.is_alphanumeric())
                            .collect::<String>()
                            .to_lowercase();
                        assert!(
                            !gendered.contains(&clean.as_str()),
                            "gendered token {clean:?} in neutral bio: {}",
                            bio.neutral
                        );
                        assert_ne!(clean, "mateo");
                    }
                }
            }
        }
    }
}
