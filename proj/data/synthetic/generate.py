#!/usr/bin/env python3
"""Generates the synthetic oncology corpus used by the end-to-end tests.

Outputs (next to this script):
  trials.jsonl            raw trials with bulleted inclusion/exclusion text
  generator_fixture.json  scripted question-generator responses per criterion
  headers.jsonl           patient headers (age, enrollment date)
  notes.jsonl             clinical notes, including notes the ingest filter drops
  qa_fixture.json         scripted QA responses per patient and question id
  ground_truth.jsonl      the trial each patient enrolled in
  pipeline.ini            configuration pointing at the fixtures

Every note is short enough to become a single chunk, so citations can name
chunk ids directly. The output is fully determined by this file.
"""

import hashlib
import json
from pathlib import Path

OUT = Path(__file__).resolve().parent

CT = "Cancer Type"
CS = "Cancer Stage"
CSUB = "Cancer Subtype"
GM = "Genetic & Biologic Markers"
LAB = "Lab/Imaging Criteria"
PT = "Prior treatment/surgery"
COM = "Comorbidities"
FS = "Functional Status"

# ----------------------------------------------------------------------------
# Trials. Each criterion: (text, [(question, concept)], dnf over local indices)
# where a dnf literal is an index or ("not", index).
# ----------------------------------------------------------------------------

TRIALS = [
    {
        "trial_id": "NCT90000001",
        "title": "Endocrine therapy with a CDK4/6 inhibitor in HR-positive, HER2-negative early breast cancer",
        "inclusion": [
            ("Histologically confirmed invasive breast carcinoma.",
             [("Does the patient have a histologically confirmed invasive breast carcinoma?", CT)], [[0]]),
            ("Hormone receptor positive (estrogen and/or progesterone receptor positive) and HER2-negative disease.",
             [("Is the tumor estrogen receptor (ER) positive?", GM),
              ("Is the tumor progesterone receptor (PR) positive?", GM),
              ("Is the tumor HER2-negative?", GM)], [[0, 2], [1, 2]]),
            ("Stage II or stage III disease at diagnosis.",
             [("Was the breast cancer stage II or stage III at diagnosis?", CS)], [[0]]),
            ("ECOG performance status of 0 to 2.",
             [("Is the patient's ECOG performance status between 0 and 2?", FS)], [[0]]),
            ("Adequate bone marrow function with an absolute neutrophil count of at least 1500 per microliter.",
             [("Is the most recent absolute neutrophil count at least 1500 per microliter?", LAB)], [[0]]),
        ],
        "exclusion": [
            ("Prior treatment with a CDK4/6 inhibitor.",
             [("Has the patient previously received a CDK4/6 inhibitor such as palbociclib, ribociclib or abemaciclib?", PT)],
             [[0]]),
            ("Known active brain metastases.",
             [("Does the patient have active brain metastases?", LAB)], [[0]]),
            ("Uncontrolled cardiac disease, including heart failure or unstable angina.",
             [("Does the patient have congestive heart failure?", COM),
              ("Does the patient have unstable angina?", COM)], [[0], [1]]),
        ],
    },
    {
        "trial_id": "NCT90000002",
        "title": "Osimertinib-based combination for EGFR-mutant advanced non-small cell lung cancer",
        "inclusion": [
            ("Histologically or cytologically confirmed non-small cell lung cancer.",
             [("Does the patient have histologically or cytologically confirmed non-small cell lung cancer?", CT)],
             [[0]]),
            ("Locally advanced or metastatic disease (stage IIIB to IV).",
             [("Is the lung cancer stage IIIB, IIIC or IV?", CS)], [[0]]),
            ("Activating EGFR mutation (exon 19 deletion or L858R) documented by tissue or plasma testing.",
             [("Does the tumor harbor an EGFR exon 19 deletion?", GM),
              ("Does the tumor harbor an EGFR L858R mutation?", GM)], [[0], [1]]),
            ("ECOG performance status of 0 or 1.",
             [("Is the patient's ECOG performance status 0 or 1?", FS)], [[0]]),
            ("At least one measurable lesion per RECIST 1.1.",
             [("Does the patient have at least one measurable lesion per RECIST 1.1?", LAB)], [[0]]),
        ],
        "exclusion": [
            ("History of interstitial lung disease or drug-induced pneumonitis.",
             [("Does the patient have a history of interstitial lung disease or drug-induced pneumonitis?", COM)],
             [[0]]),
            ("More than one prior line of systemic therapy for advanced disease.",
             [("Has the patient received more than one prior line of systemic therapy for advanced disease?", PT)],
             [[0]]),
            ("Symptomatic or untreated brain metastases.",
             [("Does the patient have brain metastases?", LAB),
              ("Are the brain metastases symptomatic or untreated?", LAB)], [[0, 1]]),
        ],
    },
    {
        "trial_id": "NCT90000003",
        "title": "PARP inhibitor for metastatic castration-resistant prostate cancer",
        "inclusion": [
            ("Histologically confirmed adenocarcinoma of the prostate.",
             [("Does the patient have histologically confirmed adenocarcinoma of the prostate?", CT)], [[0]]),
            ("Metastatic castration-resistant prostate cancer.",
             [("Does the patient have metastatic disease?", CS),
              ("Is the prostate cancer castration-resistant?", CSUB)], [[0, 1]]),
            ("Progression on at least one novel hormonal agent such as abiraterone or enzalutamide.",
             [("Has the disease progressed on abiraterone or enzalutamide?", PT)], [[0]]),
            ("ECOG performance status of 0 to 2.",
             [("Is the patient's ECOG performance status between 0 and 2?", FS)], [[0]]),
            ("Serum testosterone below 50 ng/dL.",
             [("Is the most recent serum testosterone below 50 ng/dL?", LAB)], [[0]]),
        ],
        "exclusion": [
            ("Prior treatment with a PARP inhibitor.",
             [("Has the patient previously received a PARP inhibitor such as olaparib or rucaparib?", PT)], [[0]]),
            ("History of myelodysplastic syndrome or acute myeloid leukemia.",
             [("Does the patient have a history of myelodysplastic syndrome or acute myeloid leukemia?", COM)],
             [[0]]),
        ],
    },
]

# ----------------------------------------------------------------------------
# Patients and notes: (note_id, category, date, [sentences]).
# ----------------------------------------------------------------------------

PATIENTS = {
    "P001": {"age": 58, "enrollment": "2023-06-15", "notes": [
        ("N01", "Consults", "2022-03-02", [
            "New patient consultation for a palpable left breast mass noted two months ago.",
            "Screening mammogram showed an irregular 2.4 cm mass in the upper outer quadrant.",
            "No prior history of cancer.",
            "Plan core needle biopsy."]),
        ("N02", "Procedures", "2022-03-09", [
            "Ultrasound-guided core needle biopsy of the left breast mass was performed.",
            "Three cores were obtained without complication."]),
        ("N03", "Assessment & Plan Note", "2022-03-16", [
            "Pathology shows invasive ductal carcinoma of the left breast, grade 2.",
            "Estrogen receptor positive at 95 percent and progesterone receptor positive at 60 percent.",
            "HER2 is negative with an IHC score of 1+.",
            "Ki-67 is 18 percent."]),
        ("N04", "H&P", "2022-03-30", [
            "Fifty-seven year old woman with newly diagnosed left breast invasive ductal carcinoma.",
            "She is active and fully ambulatory with ECOG performance status 1.",
            "Past medical history includes hypertension controlled on lisinopril.",
            "No known heart failure."]),
        ("N05", "Op Note", "2022-04-12", [
            "Left breast lumpectomy with sentinel lymph node biopsy.",
            "Two sentinel nodes were removed and sent to pathology.",
            "Estimated blood loss was minimal."]),
        ("N06", "Brief Op Note", "2022-04-12", [
            "Lumpectomy and sentinel node biopsy completed.",
            "Patient transferred to recovery in stable condition."]),
        ("N07", "Progress Notes", "2022-04-26", [
            "Final surgical pathology shows a 2.6 cm invasive ductal carcinoma with one of two sentinel nodes positive.",
            "Pathologic stage is IIB, pT2 pN1a.",
            "Margins are negative."]),
        ("N08", "Discharge Summary", "2022-04-13", [
            "Discharged home the day after lumpectomy.",
            "Pain controlled with oral analgesics."]),
        ("N09", "Rad Onc Simulation", "2022-06-01", [
            "CT simulation for whole breast radiation to the left breast.",
            "Planned dose is 40 Gy in 15 fractions."]),
        ("N10", "Rad Onc Weekly Review", "2022-06-15", [
            "Week two of radiation therapy.",
            "Mild skin erythema without desquamation.",
            "Tolerating treatment well."]),
        ("N11", "Progress Notes", "2022-08-10", [
            "Completed adjuvant radiation therapy.",
            "Started adjuvant letrozole.",
            "She has never received palbociclib, ribociclib or abemaciclib."]),
        ("N12", "Progress Notes", "2022-11-09", [
            "Follow up on letrozole.",
            "Reports mild arthralgias.",
            "Performance status remains ECOG 1."]),
        ("N13", "Progress Notes", "2023-02-08", [
            "Routine surveillance visit.",
            "No new neurologic symptoms and no headaches.",
            "Brain imaging has not been indicated."]),
        ("N14", "Assessment & Plan Note", "2023-05-03", [
            "Discussed adjuvant CDK4/6 inhibitor trial given node-positive stage II disease.",
            "She remains without evidence of recurrence.",
            "Cardiac history is limited to controlled hypertension."]),
        ("N15", "Discharge Instructions", "2022-04-13", [
            "Keep the incision dry for 48 hours.",
            "Call the clinic for fever or redness."]),
        ("N16", "Progress Notes", "2023-06-01", [
            "Seen before trial screening.",
            "Energy is good and she works full time.",
            "Awaiting screening laboratory results."]),
        ("N17", "Telephone Encounter", "2023-03-14", [
            "Patient called about a letrozole refill.",
            "Refill sent to the pharmacy."]),
        ("N18", "Nursing Note", "2023-06-10", [
            "Vital signs within normal limits.",
            "Patient education provided."]),
        ("N19", "Progress Notes", "2023-07-20", [
            "Started ribociclib on the study.",
            "Absolute neutrophil count is 2100 per microliter."]),
        ("N20", "Consults", "2023-08-02", [
            "Cardiology consult after enrollment for QTc monitoring.",
            "Baseline QTc is normal."]),
    ]},
    "P002": {"age": 64, "enrollment": "2023-09-01", "notes": [
        ("N01", "Consults", "2022-10-05", [
            "Referred for a right upper lobe lung mass found on chest CT.",
            "Former smoker with 20 pack years who quit in 2010.",
            "Reports cough and weight loss."]),
        ("N02", "Procedures", "2022-10-12", [
            "Bronchoscopy with endobronchial ultrasound guided biopsy of the right upper lobe mass and station 7.",
            "Samples sent for pathology and molecular testing."]),
        ("N03", "Assessment & Plan Note", "2022-10-20", [
            "Pathology confirms lung adenocarcinoma, a non-small cell lung cancer.",
            "PET CT shows bone and adrenal metastases.",
            "Clinical stage IVB."]),
        ("N04", "Assessment & Plan Note", "2022-10-28", [
            "Next generation sequencing shows an EGFR exon 19 deletion.",
            "No EGFR L858R mutation was detected.",
            "ALK and ROS1 are negative."]),
        ("N05", "H&P", "2022-11-02", [
            "Sixty-three year old man with stage IVB EGFR-mutant lung adenocarcinoma.",
            "ECOG performance status 1.",
            "No history of interstitial lung disease."]),
        ("N06", "Progress Notes", "2022-11-10", [
            "Started first-line osimertinib 80 milligrams daily.",
            "This is his first systemic therapy."]),
        ("N07", "Rad Onc Simulation", "2022-11-15", [
            "Simulation for palliative radiation to a painful T10 vertebral metastasis.",
            "Planned 20 Gy in 5 fractions."]),
        ("N08", "Rad Onc Weekly Review", "2022-11-22", [
            "Completed palliative spine radiation.",
            "Back pain improved."]),
        ("N09", "Progress Notes", "2023-01-18", [
            "Restaging CT shows partial response in the right upper lobe primary.",
            "No pneumonitis on imaging."]),
        ("N10", "Progress Notes", "2023-04-12", [
            "Continues osimertinib with good tolerance.",
            "Mild rash managed with topical steroids."]),
        ("N11", "Progress Notes", "2023-06-21", [
            "Brain MRI shows two small brain metastases.",
            "He has no neurologic symptoms."]),
        ("N12", "Rad Onc Simulation", "2023-06-28", [
            "Stereotactic radiosurgery planning for two brain metastases."]),
        ("N13", "Procedures", "2023-07-05", [
            "Stereotactic radiosurgery delivered to both brain metastases.",
            "Treatment tolerated without complication."]),
        ("N14", "Assessment & Plan Note", "2023-08-16", [
            "Restaging CT shows growth of the right upper lobe mass to 3.8 cm, measurable per RECIST 1.1.",
            "Brain metastases are treated and stable.",
            "Screening for an osimertinib combination trial."]),
        ("N15", "Progress Notes", "2023-08-28", [
            "Performance status ECOG 1.",
            "Laboratory values are within normal limits."]),
        ("N16", "Discharge Summary", "2023-03-02", [
            "Admitted overnight for dehydration from gastroenteritis.",
            "Discharged after intravenous fluids."]),
        ("N17", "Telephone Encounter", "2023-05-09", [
            "Called about rash.",
            "Advised topical therapy."]),
        ("N18", "Nursing Note", "2023-08-30", [
            "Vital signs stable.",
            "Consent paperwork reviewed."]),
        ("N19", "Progress Notes", "2023-10-04", [
            "Cycle one of the study combination completed.",
            "Grade 1 diarrhea."]),
        ("N20", "Discharge Instructions", "2023-03-02", [
            "Drink plenty of fluids.",
            "Return for persistent vomiting."]),
    ]},
    "P003": {"age": 71, "enrollment": "2024-02-10", "notes": [
        ("N01", "Consults", "2019-05-14", [
            "Referred for a PSA of 14 and an abnormal digital rectal exam.",
            "Plan prostate biopsy."]),
        ("N02", "Procedures", "2019-05-28", [
            "Transrectal ultrasound guided prostate biopsy with twelve cores."]),
        ("N03", "Assessment & Plan Note", "2019-06-06", [
            "Pathology shows prostate adenocarcinoma, Gleason score 4 plus 4 equals 8.",
            "Bone scan is negative."]),
        ("N04", "Rad Onc Simulation", "2019-07-10", [
            "Simulation for definitive prostate radiation with androgen deprivation therapy."]),
        ("N05", "Rad Onc Weekly Review", "2019-08-14", [
            "Week five of prostate radiation.",
            "Mild urinary frequency."]),
        ("N06", "Progress Notes", "2021-09-22", [
            "PSA rising despite leuprolide.",
            "Bone scan shows new metastases in the pelvis and lumbar spine.",
            "Disease is now metastatic and castration-resistant."]),
        ("N07", "Assessment & Plan Note", "2021-10-06", [
            "Started enzalutamide for metastatic castration-resistant prostate cancer.",
            "Continue leuprolide."]),
        ("N08", "Progress Notes", "2022-06-15", [
            "PSA nadir on enzalutamide was 2.1.",
            "Tolerating therapy with mild fatigue."]),
        ("N09", "Progress Notes", "2023-08-09", [
            "PSA has risen from 2.1 to 18.4 over three months.",
            "Bone scan shows new rib lesions consistent with progression on enzalutamide."]),
        ("N10", "Assessment & Plan Note", "2023-10-11", [
            "Germline testing shows a pathogenic BRCA2 variant.",
            "He has never received olaparib, rucaparib or any other PARP inhibitor."]),
        ("N11", "H&P", "2023-12-13", [
            "Seventy-one year old man with BRCA2-associated metastatic castration-resistant prostate cancer.",
            "ECOG performance status 0.",
            "No history of blood disorders."]),
        ("N12", "Progress Notes", "2024-01-17", [
            "Serum testosterone is 18 ng/dL on leuprolide.",
            "Hemoglobin is 12.1 grams per deciliter."]),
        ("N13", "Progress Notes", "2024-02-02", [
            "Screening visit for a PARP inhibitor trial.",
            "He walks two miles daily."]),
        ("N14", "Discharge Summary", "2020-02-20", [
            "Admitted for urinary retention after radiation.",
            "Catheter removed before discharge."]),
        ("N15", "Discharge Instructions", "2020-02-20", [
            "Follow up with urology in two weeks."]),
        ("N16", "Op Note", "2018-11-03", [
            "Right inguinal hernia repair with mesh.",
            "No complications."]),
        ("N17", "OR Surgeon", "2018-11-03", [
            "Surgeon attestation for hernia repair."]),
        ("N18", "Telephone Encounter", "2023-09-01", [
            "Called with questions about PSA results."]),
        ("N19", "Nursing Note", "2024-02-05", [
            "Vital signs within normal limits."]),
        ("N20", "Progress Notes", "2024-03-20", [
            "Started olaparib on the study.",
            "Tolerating therapy."]),
    ]},
}

ALLOWED_CATEGORIES = {
    "Assessment & Plan Note", "Brief Op Note", "Consults", "Discharge Instructions", "Discharge Summary",
    "H&P", "H&P (View-Only)", "Op Note", "OR Surgeon", "Procedures", "Progress Notes",
    "Rad Onc Simulation", "Rad Onc Weekly Review",
}

# ----------------------------------------------------------------------------
# Answers: (answer, confidence, cited note ids) per trial question number.
# ----------------------------------------------------------------------------

Y, N, U = "Yes", "No", "NA"

ANSWERS = {
    ("P001", "NCT90000001"): {
        1: (Y, 5, ["N03"]), 2: (Y, 5, ["N03"]), 3: (Y, 5, ["N03"]), 4: (Y, 5, ["N03"]),
        5: (Y, 5, ["N07"]), 6: (Y, 4, ["N04", "N12"]), 7: (U, 2, []), 8: (N, 5, ["N11"]),
        9: (N, 3, ["N13"]), 10: (N, 4, ["N04"]), 11: (U, 2, ["N14"]),
    },
    ("P001", "NCT90000002"): {
        1: (N, 5, ["N03"]), 2: (N, 5, ["N07"]), 3: (U, 2, []), 4: (U, 2, []), 5: (Y, 4, ["N12"]),
        6: (N, 3, ["N14"]), 7: (N, 3, []), 8: (N, 4, ["N11"]), 9: (N, 3, ["N13"]), 10: (U, 1, []),
    },
    ("P001", "NCT90000003"): {
        1: (N, 5, ["N03"]), 2: (N, 4, ["N14"]), 3: (U, 1, []), 4: (N, 4, ["N11"]), 5: (Y, 4, ["N12"]),
        6: (U, 1, []), 7: (N, 4, []), 8: (N, 3, []),
    },
    ("P002", "NCT90000001"): {
        1: (N, 5, ["N03"]), 2: (U, 2, []), 3: (U, 2, []), 4: (U, 2, []), 5: (N, 4, ["N03"]),
        6: (Y, 4, ["N15"]), 7: (Y, 3, ["N15"]), 8: (N, 4, ["N06"]), 9: (N, 3, ["N14"]),
        10: (N, 3, ["N05"]), 11: (N, 3, []),
    },
    ("P002", "NCT90000002"): {
        1: (Y, 5, ["N03"]), 2: (Y, 5, ["N03"]), 3: (Y, 5, ["N04"]), 4: (N, 5, ["N04"]),
        5: (Y, 4, ["N15"]), 6: (Y, 4, ["N14"]), 7: (N, 4, ["N05", "N09"]), 8: (N, 4, ["N06"]),
        9: (Y, 5, ["N11"]), 10: (N, 4, ["N13", "N14"]),
    },
    ("P002", "NCT90000003"): {
        1: (N, 5, ["N03"]), 2: (Y, 5, ["N03"]), 3: (U, 1, []), 4: (N, 4, ["N06"]), 5: (Y, 4, ["N15"]),
        6: (U, 1, []), 7: (N, 4, ["N06"]), 8: (N, 3, []),
    },
    ("P003", "NCT90000001"): {
        1: (N, 5, ["N03"]), 2: (U, 1, []), 3: (U, 1, []), 4: (U, 1, []), 5: (U, 1, []),
        6: (Y, 4, ["N11"]), 7: (U, 2, []), 8: (N, 4, ["N10"]), 9: (N, 3, []), 10: (N, 3, ["N11"]),
        11: (N, 3, []),
    },
    ("P003", "NCT90000002"): {
        1: (N, 5, ["N03"]), 2: (N, 4, ["N03"]), 3: (U, 1, []), 4: (U, 1, []), 5: (Y, 4, ["N11"]),
        6: (Y, 3, ["N09"]), 7: (N, 3, []), 8: (N, 4, ["N07"]), 9: (N, 3, []), 10: (U, 1, []),
    },
    ("P003", "NCT90000003"): {
        1: (Y, 5, ["N03"]), 2: (Y, 5, ["N06"]), 3: (Y, 5, ["N06"]), 4: (Y, 5, ["N09"]),
        5: (Y, 5, ["N11", "N13"]), 6: (Y, 5, ["N12"]), 7: (N, 5, ["N10"]), 8: (N, 4, ["N11"]),
    },
}

GROUND_TRUTH = [("P001", "NCT90000001"), ("P002", "NCT90000002"), ("P003", "NCT90000003")]

# Responses that exercise retry and fallback handling in the QA engine.
# (patient, trial, question number) -> list of raw responses, one per attempt.
SPECIAL_SCRIPTS = {
    # First reply is not JSON; the retry succeeds.
    ("P003", "NCT90000003", 4): ["I think the answer is yes.", None],
    # Every reply lacks the answer field, so the engine records an NA fallback.
    ("P003", "NCT90000003", 8): ['{"question_explanation": "x", "answer_explanation": "y", "confidence": 3}'],
}


def chunk_id(patient, note_id, start, end):
    key = f"{patient}\x1f{note_id}\x1f{start}\x1f{end}"
    return "c" + hashlib.sha256(key.encode()).hexdigest()[:16]


def kept(patient, note):
    _, category, date, _ = note
    return category in ALLOWED_CATEGORIES and date <= PATIENTS[patient]["enrollment"]


def question_list(trial):
    out = []
    for text, questions, _ in trial["inclusion"] + trial["exclusion"]:
        out.extend(questions)
    return out


def main():
    # ---- trials and generator fixture ------------------------------------------
    trial_lines, generator = [], {}
    for trial in TRIALS:
        trial_lines.append(json.dumps({
            "trial_id": trial["trial_id"],
            "title": trial["title"],
            "inclusion_text": "Inclusion Criteria:\n" + "\n".join(f"- {c[0]}" for c in trial["inclusion"]),
            "exclusion_text": "Exclusion Criteria:\n" + "\n".join(f"- {c[0]}" for c in trial["exclusion"]),
        }))
        for text, questions, dnf in trial["inclusion"] + trial["exclusion"]:
            response = {
                "questions": [{"text": q, "concept": c} for q, c in questions],
                "dnf": [[{"q_index": i, "negated": False} for i in clause] for clause in dnf],
            }
            if text in generator and generator[text] != response:
                raise SystemExit(f"conflicting generator fixtures for {text!r}")
            generator[text] = response

    # ---- patients and notes -----------------------------------------------------
    header_lines, note_lines = [], []
    chunk_of = {}
    for patient, info in PATIENTS.items():
        header_lines.append(json.dumps({
            "patient_id": patient, "age_at_enrollment": info["age"], "enrollment_date": info["enrollment"]}))
        for note in info["notes"]:
            note_id, category, date, sentences = note
            note_lines.append(json.dumps({
                "patient_id": patient, "note_id": note_id, "category": category, "date": date,
                "text": " ".join(sentences)}))
            if kept(patient, note):
                chunk_of[(patient, note_id)] = chunk_id(patient, note_id, 0, len(sentences) - 1)

    # ---- QA fixture ---------------------------------------------------------------
    trials_by_id = {t["trial_id"]: t for t in TRIALS}
    qa = {}
    for (patient, trial_id), answers in sorted(ANSWERS.items()):
        questions = question_list(trials_by_id[trial_id])
        if sorted(answers) != list(range(1, len(questions) + 1)):
            raise SystemExit(f"answers for {patient}/{trial_id} do not cover every question")
        width = max(2, len(str(len(questions))))
        for number, (answer, confidence, notes) in sorted(answers.items()):
            question_id = f"{trial_id}-Q{number:0{width}d}"
            citations = []
            for note_id in notes:
                if (patient, note_id) not in chunk_of:
                    raise SystemExit(f"{patient}/{question_id} cites filtered note {note_id}")
                citations.append(chunk_of[(patient, note_id)])
            text = questions[number - 1][0]
            response = json.dumps({
                "question_explanation": f"The question asks: {text} The answer depends on the documented history.",
                "answer_explanation": (f"Records {', '.join(notes)} were reviewed." if notes
                                       else "The records do not address this question."),
                "answer": answer,
                "confidence": confidence,
                "citations": citations,
            })
            script = SPECIAL_SCRIPTS.get((patient, trial_id, number))
            value = response if script is None else [response if s is None else s for s in script]
            qa.setdefault(patient, {})[question_id] = value

    def write(name, text):
        (OUT / name).write_text(text, encoding="utf-8")

    write("trials.jsonl", "\n".join(trial_lines) + "\n")
    write("generator_fixture.json", json.dumps(generator, indent=2) + "\n")
    write("headers.jsonl", "\n".join(header_lines) + "\n")
    write("notes.jsonl", "\n".join(note_lines) + "\n")
    write("qa_fixture.json", json.dumps(qa, indent=2) + "\n")
    write("ground_truth.jsonl",
          "\n".join(json.dumps({"patient_id": p, "trial_id": t}) for p, t in GROUND_TRUTH) + "\n")
    write("pipeline.ini", "\n".join([
        "# Offline configuration for the synthetic corpus.",
        "backend = scripted",
        "generator_fixture = generator_fixture.json",
        "qa_fixture = qa_fixture.json",
        "embedder = mock",
        "retrieval_k = 10",
        "chunk_max_tokens = 256",
        "max_in_flight = 4",
        "scoring_method = WeightedTier",
        "deterministic = true",
        "",
        "[thresholds]",
        "met = 0.66",
        "notmet = 0.34",
        "",
        "[cost]",
        "input_speed = 1000",
        "output_speed = 100",
        "hourly_rate = 2.0",
        "price_in_per_1k = 0.01",
        "price_out_per_1k = 0.03",
        "",
    ]))


if __name__ == "__main__":
    main()
