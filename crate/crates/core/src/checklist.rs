//! Guiding questions for building an equitable decision-making model.

pub struct Section {
    pub task: &'static str,
    pub questions: &'static [&'static str],
}

pub const TITLE: &str = "Guiding questions for an equitable decision-making model";

pub const SECTIONS: [Section; 3] = [
    Section {
        task: "Selection of the proxy model",
        questions: &[
            "What class of model functions would be the best to use, H_P?",
            "What features will be the most predictive?",
            "Given a selection of features, X_P, what access obstacles, O_P, will individuals face to access this model?",
            "Who is most likely to face the most (fewest) access obstacles?",
            "Which policy can alleviate the obstacles individuals face? Do I have the policy, Φ_P, to alleviate the obstacles? What is the model access Ψ_P?",
            "How well does the model function perform on individuals in different groups, Ω(P)?",
            "How would a change in features affect accuracy, obstacles faced, and model access Ψ_P?",
            "How well does this model reflect the physical and social environment in which decisions take form?",
            "Does the chosen model achieve equal access or optimal access threshold score?",
        ],
    },
    Section {
        task: "Selection of evaluation model",
        questions: &[
            "What class of evaluation model functions would be the best to use, H_T?",
            "What are features I am I using for evaluation? What is the feature proxy gap, Γ_X(X_P, X_T)?",
            "What is the label proxy gap, Γ_L(h_P, h_T)?",
            "Given a selection of evaluation features, X_T, what utilization obstacles will individuals face to utilize the model?",
            "What is the obstacle gap?",
            "Who is most likely to face the most (fewest) utilization obstacles?",
            "If I changed the features, would that increase (decrease) the accuracy of evaluation results and increase (decrease) utilization obstacles faced?",
            "Which policy can alleviate the utilization obstacles individuals face? Do I have the policy, Φ_T, to alleviate the utilization obstacles?",
            "How well does the evaluation model function perform on individuals in different groups?",
            "Does the chosen model achieve equal utilization or optimal utilization threshold score?",
        ],
    },
    Section {
        task: "Curation of ground truth",
        questions: &[
            "Given the obstacle gap, label proxy gap, Γ_L(h_P, h_T), and feature proxy gap, Γ_X(X_P, X_T), should I use proxy or evaluation model features/labels or both?",
            "If I choose these features/labels, given utilization, ζ(P), access, Ψ(P), and outcome, Ω(P), who is most likely to be misrepresented in the new ground truth? Do I exhaustively capture obstacles individuals face?",
        ],
    },
];

pub fn question_count() -> usize {
    SECTIONS.iter().map(|s| s.questions.len()).sum()
}

/// The checklist as plain text: a title, then each task with its numbered questions.
pub fn render() -> String {
    let mut out = String::new();
    out.push_str(TITLE);
    out.push('\n');
    for section in &SECTIONS {
        out.push('\n');
        out.push_str(section.task);
        out.push('\n');
        for (i, q) in section.questions.iter().enumerate() {
            out.push_str(&format!("{}) {}\n", i + 1, q));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        let counts: Vec<usize> = SECTIONS.iter().map(|s| s.questions.len()).collect();
        assert_eq!(counts, vec![9, 10, 2]);
        assert_eq!(question_count(), 21);
        assert_eq!(render(), render());
    }
}
