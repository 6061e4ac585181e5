use std::fmt::Write;

use super::programs::{ContextEntry, DisambiguationCandidate};

pub const EXTRACTION_INSTRUCTIONS: &str = "\
You are an expert in extracting information from FDA drug labels. I have provided the text from a drug package label. Please extract the following information in a structured format:

IMPORTANT: Only respond with the extracted XML. Do not repeat any part of these instructions or the input text in your response.

1. Indications (what the drug is used for)
2. Contraindications (when the drug should not be used)
3. Side effects (with frequencies if available)

For each indication, contraindication, side effect, provide only one item per tag and include the exact line from the text that contains this information. Extract any and all indications, contraindications, side effects you find.

It is important to note that these side effects, indications and contraindications can be found in sections other than the ones specifically dedicated for them so search carefully across the entire text and find all of them.

Try to keep the indication, contraindication and side-effect names that you extract as short and straightforward as possible but accuracy is important.

Provide your response in the following XML format:

<drug_information>
  <indications>
    <indication>
      <indication_name>INDICATION NAME</indication_name>
    </indication>
  </indications>
  <contraindications>
    <contraindication>
      <contraindication_name>CONTRAINDICATION NAME</contraindication_name>
    </contraindication>
  </contraindications>
  <side_effects>
    <side_effect>
      <side_effect_name>SIDE EFFECT NAME</side_effect_name>
    </side_effect>
  </side_effects>
</drug_information>";

const CATEGORY_DEFINITIONS: &str = "\
1. Disease: Medical conditions, disorders, syndromes (e.g., \"diabetes mellitus\", \"hypertension\", \"myocardial infarction\")
2. Phenotype: Observable clinical signs, symptoms, or abnormalities (e.g., \"seizures\", \"hypotension\", \"bradycardia\")
3. Drug or Chemical: Drug interactions, concomitant medications, or chemical substances (e.g., \"monoamine oxidase inhibitors\", \"warfarin\", \"alcohol\")
4. Allergy or Hypersensitivity: Allergic reactions or hypersensitivity conditions
5. Patient Population: Demographics, life stages, or patient groups (e.g., \"pregnancy\", \"pediatric patients\", \"elderly\")
6. Procedure: Medical or surgical procedures (e.g., \"surgery\", \"hemodialysis\", \"cardiac catheterization\")
7. Other: Any terms that do not fit into the above categories";

/// Category instructions and the numbered terms (1-based).
pub fn classification_prompt(terms: &[&str]) -> (String, String) {
    let instructions = format!(
        "Classify each of the following terms, taken from the indications and contraindications \
         of drug labels, into exactly one of these categories:\n\n{CATEGORY_DEFINITIONS}\n\n\
         Respond only with a JSON array with one object per term, of the form \
         {{\"index\": <term number>, \"category\": \"<category name>\"}}."
    );
    let mut payload = String::from("Terms:\n");
    for (i, t) in terms.iter().enumerate() {
        let _ = writeln!(payload, "{}. {}", i + 1, t);
    }
    (instructions, payload.trim_end().to_string())
}

/// Candidates with scores and definitions, and related terms tagged with
/// their relation to the candidates.
pub fn disambiguation_prompt(
    term: &str,
    ontology: &str,
    candidates: &[DisambiguationCandidate],
    context: &[ContextEntry],
) -> (String, String) {
    let instructions = format!(
        "You map clinical terms to {ontology} ontology classes. Choose the single {ontology} class \
         that best matches the term, using the candidate matches and the related terms from the \
         ontology graph. Respond only with a JSON object of the form \
         {{\"id\": \"<{ontology} ID>\", \"name\": \"<{ontology} term name>\"}}."
    );
    let mut payload = format!("Term: {term}\n\nCandidate matches:\n");
    for (i, c) in candidates.iter().enumerate() {
        let def = c
            .definition
            .as_deref()
            .filter(|d| !d.trim().is_empty())
            .unwrap_or("no definition");
        let _ = writeln!(
            payload,
            "{}. {} | {} | score {:.4} | {}",
            i + 1,
            c.id,
            c.name,
            c.score,
            def
        );
    }
    if !context.is_empty() {
        payload.push_str("\nRelated terms:\n");
        for e in context {
            let _ = writeln!(payload, "- {} | {} ({})", e.id, e.name, e.relation.tag());
        }
    }
    (instructions, payload.trim_end().to_string())
}
