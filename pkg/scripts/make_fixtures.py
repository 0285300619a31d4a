"""Regenerate the bundled toy fixtures under fixtures/.

    python scripts/make_fixtures.py

Output is deterministic; the files are committed so tests do not depend on
running this script.
"""

import hashlib
import json
import random
import struct
import unicodedata
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "fixtures"

KK = [
    "Қазақстан Республикасы Орталық Азияда орналасқан мемлекет. Оның астанасы Астана қаласы, ал ең ірі қаласы Алматы.",
    "Абай Құнанбайұлы қазақтың ұлы ақыны, ағартушы және ойшыл. Оның қара сөздері бүгінгі күнге дейін оқылады.",
    "Наурыз мейрамы көктемнің келуін білдіреді. Бұл күні адамдар наурыз көже пісіріп, бір-біріне жақсы тілектер айтады.",
    "Бүгін ауа райы жылы, күн ашық. Балалар аулада ойнап жүр, ал ата-аналары саябақта серуендеп жүр.",
    "Қазақ тілі түркі тілдері тобына жатады. Бұл тілде жаңа сөздер жалғаулар арқылы жасалады.",
    "Дала кең, жылқылар жайылып жүр. Малшылар таңертең ерте тұрып, малды өріске айдайды.",
    "Мектепте оқушылар математика, тарих және қазақ әдебиеті сабақтарын оқиды.",
    "Алматы тауларының етегінде орналасқан әдемі қала. Қыста мұнда көп адам шаңғы тебуге келеді.",
    "Кітап оқу адамның ой-өрісін кеңейтеді. Күнделікті бір сағат кітап оқыған өте пайдалы.",
    "Менің атым Айгүл. Мен университетте биология мамандығы бойынша оқимын.",
    "Ұлттық тағамдарымыздың ішінде бешбармақ ерекше орын алады. Оны қонақтарға құрметпен ұсынады.",
    "Темір жол вокзалынан поезд кешкі сағат сегізде жөнелді. Жолаушылар терезеден далаға қарап отырды.",
    "Ғалымдар жаңа технологияларды ауыл шаруашылығында қолдануды ұсынды.",
    "Қазақстанның табиғаты алуан түрлі: шөлдер, таулар, өзендер мен көлдер бар.",
    "Әжем маған ертегі айтып беретін. Ол ертегілерде батырлар мен ақылды қыздар туралы айтылатын.",
    "Домбыра қазақ халқының ең танымал музыкалық аспабы. Оның екі ішегі бар.",
    "Күз келгенде ағаштардың жапырақтары сарғайып, жерге түседі.",
    "Біздің ауылда үлкен мешіт пен жаңа мектеп салынды.",
    "Спортшыларымыз халықаралық жарыста үш алтын медаль жеңіп алды.",
    "Дәрігерлер күнделікті жаяу жүруді және көкөніс жеуді ұсынады.",
]

RU = "Сегодня в городе прошёл сильный дождь, и многие жители остались дома, чтобы не промокнуть по дороге на работу."
EN = "The quick brown fox jumps over the lazy dog while the farmers gather their sheep near the river bank today."


def doc(i, source, text):
    return {"id": i, "source": source, "text": text}


def pipeline_corpus():
    """One violation per filter stage, two duplicate kinds, one bad line, one reference hit."""
    decomposed = unicodedata.normalize("NFD", KK[2])
    assert decomposed != KK[2]
    rows = [
        doc("d01", "web", KK[0]),
        doc("d02", "web", "Қазақ тілі өте әдемі."),                                   # min_length
        doc("d03", "web", KK[1] + " " + " ".join(f"https://kz.example/{k}" for k in range(6))),  # url_density
        doc("d04", "web", KK[3] + "".join("<div>x</div>" for _ in range(3))),         # html_tags (6)
        doc("d05", "web", EN),                                                        # script_ratio
        doc("d06", "web", RU),                                                        # language_id
        doc("d07", "wiki", KK[0]),                                                    # dedup (exact copy of d01)
        doc("d08", "news", "  " + KK[4].replace(" ", "  \t ", 3) + "\x00\x07\n\n\n\n" + KK[5] + "  "),
        doc("d09", "news", KK[4] + "\n\n" + KK[5]),                                   # dedup (equal to d08 once cleaned)
        doc("d10", "books", decomposed),                                              # survives via NFC
        doc("d11", "books", KK[6] + " " + KK[7]),                                     # dedup via reference set
    ]
    lines = [json.dumps(r, ensure_ascii=False).encode("utf-8") for r in rows]
    bad = b'{"id": "d12", "source": "web", "text": "\xff\xfe broken bytes"}'
    lines.insert(11, bad)
    (OUT / "pipeline_corpus.jsonl").write_bytes(b"\n".join(lines) + b"\n")

    ref = [hashlib.md5((KK[6] + " " + KK[7]).encode("utf-8")).digest(),
           hashlib.md5(b"unrelated reference text").digest()]
    (OUT / "pipeline_ref_hashes.bin").write_bytes(struct.pack("<4sQ", b"MD5H", len(ref)) + b"".join(ref))
    (OUT / "pipeline_ref_hashes.txt").write_text("".join(d.hex() + "\n" for d in ref), encoding="ascii")


def toy_corpus(n=400, seed=7):
    rng = random.Random(seed)
    rows = []
    for i in range(n):
        k = rng.randint(2, 5)
        text = " ".join(rng.sample(KK, k))
        rows.append(doc(f"t{i:04d}", rng.choice(["web", "news", "wiki", "books"]), text))
    # some noise for the cleaner to remove
    rows.append(doc("junk-ru", "web", RU + " " + RU))
    rows.append(doc("junk-en", "web", EN + " " + EN))
    rows.append(doc("junk-short", "web", "Сәлем!"))
    rows.append(doc("junk-dup", "web", rows[0]["text"]))
    with open(OUT / "toy_corpus.jsonl", "w", encoding="utf-8", newline="\n") as f:
        for r in rows:
            f.write(json.dumps(r, ensure_ascii=False) + "\n")


MC = [
    ("", "Қазақстанның астанасы қай қала?", ["Астана", "Париж", "Токио", "Лондон"], 0),
    ("", "Абай Құнанбайұлы кім болған?", ["футболшы", "ақын және ойшыл", "ұшқыш", "суретші"], 1),
    ("", "Наурыз мейрамы қай мезгілде тойланады?", ["қыста", "күзде", "көктемде", "жазда"], 2),
    ("", "Домбыраның неше ішегі бар?", ["бес", "төрт", "алты", "екі"], 3),
    ("", "Қазақ тілі қай тілдер тобына жатады?", ["түркі", "роман", "герман", "славян"], 0),
    ("", "Бешбармақ деген не?", ["ән", "ұлттық тағам", "ойын", "кітап"], 1),
    ("", "Алматы қаласы неге жақын орналасқан?", ["теңіз", "шөл", "таулар", "мұз"], 2),
    ("", "Күзде ағаштардың жапырақтары қандай болады?", ["көк", "ақ", "қара", "сары"], 3),
    ("", "Малшылар малды қайда айдайды?", ["өріске", "мектепке", "дүкенге", "вокзалға"], 0),
    ("", "Наурыз күні не пісіреді?", ["торт", "наурыз көже", "пицца", "нан"], 1),
    ("Мен университетте биология мамандығы бойынша оқимын.", "Айгүл нені оқиды?", ["тарих", "физика", "биология", "музыка"], 2),
    ("Темір жол вокзалынан поезд кешкі сағат сегізде жөнелді.", "Поезд сағат нешеде жөнелді?", ["бесте", "онда", "жетіде", "сегізде"], 3),
    ("Спортшыларымыз халықаралық жарыста үш алтын медаль жеңіп алды.", "Неше алтын медаль алынды?", ["үш", "бір", "бес", "он"], 0),
    ("Дәрігерлер күнделікті жаяу жүруді және көкөніс жеуді ұсынады.", "Дәрігерлер не жеуді ұсынады?", ["тәтті", "көкөніс", "май", "тұз"], 1),
    ("Біздің ауылда үлкен мешіт пен жаңа мектеп салынды.", "Ауылда не салынды?", ["зауыт", "әуежай", "мектеп", "стадион"], 2),
    ("Қыста мұнда көп адам шаңғы тебуге келеді.", "Адамдар қыста не істейді?", ["жүзеді", "егін егеді", "балық аулайды", "шаңғы тебеді"], 3),
    ("Кітап оқу адамның ой-өрісін кеңейтеді.", "Кітап оқу нені кеңейтеді?", ["ой-өрісін", "үйін", "көшені", "қаланы"], 0),
    ("Ғалымдар жаңа технологияларды ауыл шаруашылығында қолдануды ұсынды.", "Ғалымдар нені ұсынды?", ["соғыс", "технологияларды", "демалыс", "саяхат"], 1),
    ("Әжем маған ертегі айтып беретін.", "Әжесі не айтып беретін?", ["жаңалық", "ауа райы", "ертегі", "баға"], 2),
    ("Қазақстанның табиғаты алуан түрлі: шөлдер, таулар, өзендер мен көлдер бар.", "Қазақстанда не бар?", ["мұхит", "жанартау", "джунгли", "көлдер"], 3),
]

LABELS = ["ғылым", "саяхат", "саясат", "спорт", "денсаулық", "ойын-сауық", "география"]
CLS = [
    ("Ғалымдар жаңа технологияларды ауыл шаруашылығында қолдануды ұсынды.", "ғылым"),
    ("Темір жол вокзалынан поезд кешкі сағат сегізде жөнелді.", "саяхат"),
    ("Парламент жаңа заң жобасын талқылады.", "саясат"),
    ("Спортшыларымыз халықаралық жарыста үш алтын медаль жеңіп алды.", "спорт"),
    ("Дәрігерлер күнделікті жаяу жүруді және көкөніс жеуді ұсынады.", "денсаулық"),
    ("Кеше кешке қалада үлкен концерт өтті.", "ойын-сауық"),
    ("Қазақстанның табиғаты алуан түрлі: шөлдер, таулар, өзендер мен көлдер бар.", "география"),
]


def eval_fixtures():
    with open(OUT / "mc_20.jsonl", "w", encoding="utf-8", newline="\n") as f:
        for i, (ctx, q, ch, g) in enumerate(MC):
            row = {"id": f"mc{i:02d}", "question": q, "choices": ch, "gold": g}
            if ctx:
                row["context"] = ctx
            f.write(json.dumps(row, ensure_ascii=False) + "\n")
    with open(OUT / "cls_7.jsonl", "w", encoding="utf-8", newline="\n") as f:
        for i, (text, label) in enumerate(CLS):
            f.write(json.dumps({"id": f"c{i}", "text": text, "label": label}, ensure_ascii=False) + "\n")
    tasks = OUT / "tasks"
    tasks.mkdir(exist_ok=True)
    (tasks / "mc.json").write_text(json.dumps(
        {"name": "toy-mc", "kind": "mc", "template": "«{context}»\n{question}\n",
         "context_free_template": "{question}\n", "separator": ""}, ensure_ascii=False, indent=2) + "\n",
        encoding="utf-8")
    (tasks / "topic.json").write_text(json.dumps(
        {"name": "toy-topic", "kind": "classification", "template": "{text}\nТақырып: ", "labels": LABELS},
        ensure_ascii=False, indent=2) + "\n", encoding="utf-8")


def run_config():
    cfg = {
        "corpus": "../work/blocks.bin",
        "preset": "tiny",
        "optimizer": {"peak_lr": 3e-3, "warmup_steps": 10},
        "seed": 0,
        "batch_size": 8,
        "steps": 200,
        "checkpoint": "../work/tiny.ckpt",
        "checkpoint_every": 100,
        "trace": "../work/trace.csv",
    }
    (OUT / "run_tiny.json").write_text(json.dumps(cfg, indent=2) + "\n", encoding="utf-8")


if __name__ == "__main__":
    OUT.mkdir(exist_ok=True)
    pipeline_corpus()
    toy_corpus()
    eval_fixtures()
    run_config()
    print(f"fixtures written to {OUT}")
