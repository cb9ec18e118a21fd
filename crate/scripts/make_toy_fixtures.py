"""Build the bundled toy corpus, Zipf table, LS dataset and few-shot examples.

Tokenization is a plain regex split; POS is coarse (PROPN, NUM, PUNCT, WORD).
Zipf values come from the `wordfreq` package. Words it does not know are
left out of the table, so they count as out-of-vocabulary.

    python3 scripts/make_toy_fixtures.py
"""

import json
import re
from pathlib import Path

from wordfreq import zipf_frequency

OUT = Path(__file__).resolve().parent.parent / "fixtures" / "toy"

PROPER = {
    "Lisbon", "Danube", "Marta", "Okafor", "Helsinki", "Tuesday", "Atlantic",
    "Greta", "Europe", "Nairobi", "Kyoto", "Amsterdam", "Ravi", "Alps",
    "Sahara", "Pacific", "Mendel", "Darwin", "Andes",
}

DOCS = {
    "harbour": [
        "The old harbour of Lisbon was crowded with fishing boats every morning before sunrise.",
        "Merchants would haggle loudly over the price of sardines while gulls circled above the nets.",
        "Nobody remembered exactly when the ancient lighthouse had been abandoned.",
        "It rained.",
        "A meticulous inspector arrived to evaluate whether the crumbling pier could still support heavy cargo.",
        "Her verdict was unambiguous: the structure had deteriorated beyond any reasonable repair.",
    ],
    "river": [
        "The Danube meanders through several countries before it finally reaches the sea.",
        "In spring the water level rises rapidly and the surrounding meadows become temporarily submerged.",
        "Farmers have learned to anticipate these floods and plant their crops accordingly.",
        "Scientists monitor the sediment that the current deposits along the fertile banks each year.",
        "Short sentences do not count here.",
        "Without this natural replenishment, the soil would gradually lose much of its productivity.",
    ],
    "kitchen": [
        "Marta insisted that a genuine stew must simmer slowly for at least three hours.",
        "She chopped the onions meticulously and sprinkled a generous amount of paprika over the meat.",
        "The aroma permeated the entire apartment and eventually drifted into the corridor.",
        "Her neighbours, though initially sceptical, soon requested the recipe.",
        "She politely declined, claiming the ingredients were a closely guarded family secret.",
    ],
    "library": [
        "The municipal library in Helsinki recently acquired a remarkable collection of medieval manuscripts.",
        "Archivists must handle the fragile parchment with extraordinary caution to prevent irreversible damage.",
        "Each page is photographed under controlled lighting and then catalogued in a searchable database.",
        "Visitors can now examine the illuminated letters without ever touching the original documents.",
        "The project was financed by a modest grant and the persistent efforts of volunteers.",
    ],
    "storm": [
        "On Tuesday a ferocious storm swept across the Atlantic coast without much warning.",
        "Residents were urged to evacuate low-lying neighbourhoods and to secure loose objects in their gardens.",
        "Power lines collapsed under the weight of fallen branches, leaving thousands of households in darkness.",
        "Emergency crews worked tirelessly throughout the night to restore electricity and clear the roads.",
        "By morning the wind had subsided, revealing the astonishing extent of the devastation.",
    ],
    "school": [
        "The new teacher encouraged her pupils to articulate their opinions clearly and respectfully.",
        "Some children were reluctant to speak at first, fearing that their answers might be ridiculed.",
        "Gradually the classroom atmosphere became more relaxed and the discussions grew remarkably lively.",
        "Parents noticed that their children were increasingly eager to share what they had learned.",
        "Greta said it was fun.",
        "The headmaster later praised the unconventional approach during the annual assembly.",
    ],
    "market": [
        "The weekly market transforms the quiet square into a vibrant maze of colourful stalls.",
        "Vendors display an abundance of seasonal vegetables, fragrant herbs and freshly baked bread.",
        "Bargaining is customary, although most regular customers simply pay the advertised price.",
        "Tourists often linger near the cheese counter, sampling varieties they have never encountered before.",
        "When the bells ring at noon, the merchants begin to dismantle their temporary shelters.",
    ],
    "mountain": [
        "Climbing in the Alps demands stamina, careful preparation and a healthy respect for the weather.",
        "Experienced guides scrutinize the forecast before deciding whether an ascent is feasible.",
        "An unexpected blizzard can render even a familiar route treacherous within minutes.",
        "The reward for reaching the summit is a breathtaking panorama of glaciers and jagged peaks.",
        "Many climbers describe the descent as more exhausting than the ascent itself.",
    ],
    "garden": [
        "The botanical garden cultivates thousands of species collected from every continent.",
        "A dedicated team of gardeners meticulously prunes the shrubs and replenishes the ornamental ponds.",
        "Rare orchids are kept in a humid greenhouse where the temperature is strictly regulated.",
        "Visitors frequently photograph the enormous water lilies that float serenely on the central pool.",
        "Admission is free on the first Sunday of every month, which attracts enormous crowds.",
    ],
    "train": [
        "The overnight train from Amsterdam departed precisely on schedule despite the heavy snowfall.",
        "Passengers settled into narrow compartments and exchanged anecdotes about previous journeys.",
        "A conductor meticulously verified every ticket before dimming the lights in the corridor.",
        "Around midnight the locomotive slowed abruptly, and an announcement explained a temporary obstruction.",
        "The delay was inconvenient, but most travellers accepted it with remarkable equanimity.",
    ],
    "lab": [
        "The laboratory assistant carefully calibrated the microscope before examining the samples.",
        "Preliminary results suggested that the bacteria were resistant to the conventional treatment.",
        "The researchers decided to replicate the experiment in order to eliminate any potential contamination.",
        "Their hypothesis was eventually corroborated by an independent team working in Nairobi.",
        "The findings were published in a prestigious journal and generated considerable debate.",
    ],
    "festival": [
        "Every autumn the village celebrates the harvest with an exuberant festival lasting several days.",
        "Musicians perform traditional melodies while dancers in elaborate costumes parade through the streets.",
        "The culmination of the festivities is a spectacular display of fireworks above the lake.",
        "Elderly residents reminisce about the modest celebrations of their childhood.",
        "Despite its growing popularity, the festival has preserved much of its authentic character.",
    ],
    "names": [
        "Ravi Okafor visited Kyoto and Lisbon before returning to Nairobi with Marta and Greta.",
        "Darwin and Mendel both studied inheritance, although their methods differed considerably in scope.",
    ],
}

def g(*pairs):
    """Gold list from (word, count) pairs; each count is that many annotators."""
    return [w for w, n in pairs for _ in range(n)]


# (context, [(target, gold), ...]); instance ids follow file order.
DATASET = [
    ("The committee will scrutinize the proposal before the vote.", [
        ("scrutinize", g(("examine", 3), ("check", 2), ("study", 1), ("inspect", 1))),
        ("proposal", g(("plan", 4), ("idea", 1), ("offer", 1))),
    ]),
    ("Her tenacity impressed everyone on the team.", [
        ("tenacity", g(("determination", 3), ("persistence", 3), ("grit", 1))),
    ]),
    ("The instructions were ambiguous and confused the staff.", [
        ("ambiguous", g(("unclear", 5), ("vague", 2))),
        ("instructions", g(("instructions", 3), ("directions", 2), ("rules", 2))),
    ]),
    ("They decided to abandon the project after months of delays.", [
        ("abandon", g(("drop", 3), ("quit", 2), ("leave", 2))),
        ("delays", g(("delays", 4), ("waits", 2), ("holdups", 1))),
    ]),
    ("The medicine helped alleviate the chronic pain.", [
        ("alleviate", g(("ease", 4), ("relieve", 3))),
        ("chronic", g(("lasting", 3), ("long-term", 3), ("constant", 1))),
    ]),
    ("The ancient ruins attracted numerous visitors.", [
        ("numerous", g(("many", 6), ("lots", 1))),
        ("ancient", g(("old", 5), ("very old", 2))),
    ]),
    ("He gave a candid account of the incident.", [
        ("candid", g(("honest", 5), ("frank", 2))),
        ("incident", g(("event", 3), ("accident", 2), ("incident", 1))),
    ]),
    ("The negotiations reached an impasse late at night.", [
        ("impasse", g(("deadlock", 3), ("standstill", 2), ("dead end", 2))),
    ]),
    ("Residents were urged to evacuate the area immediately.", [
        ("evacuate", g(("leave", 6), ("exit", 1))),
        ("urged", g(("asked", 3), ("told", 3), ("pushed", 1))),
    ]),
    ("The lecture was tedious and far too long.", [
        ("tedious", g(("boring", 6), ("dull", 2))),
    ]),
    ("The motorized zoom lenses always keep the same focal length.", [
        ("focal", g(("main", 3), ("primary", 1), ("central", 1), ("key", 1))),
    ]),
    ("She gave an eloquent speech at the ceremony.", [
        ("eloquent", g(("expressive", 3), ("articulate", 2), ("fluent", 2))),
    ]),
    ("The merchant tried to conceal the damage.", [
        ("conceal", g(("hide", 6), ("cover", 1))),
    ]),
    ("Prices fluctuate throughout the year.", [
        ("fluctuate", g(("change", 4), ("vary", 3))),
    ]),
    ("The evidence was insufficient to convict him.", [
        ("insufficient", g(("not enough", 3), ("lacking", 2), ("inadequate", 2))),
        ("convict", g(("find guilty", 3), ("sentence", 2), ("jail", 2))),
    ]),
    ("The athlete displayed remarkable resilience after the injury.", [
        ("resilience", g(("toughness", 3), ("strength", 3), ("recovery", 1))),
        ("remarkable", g(("amazing", 3), ("great", 2), ("notable", 2))),
    ]),
    ("The town was affluent and well maintained.", [
        ("affluent", g(("rich", 5), ("wealthy", 3))),
    ]),
]

# Placeholder few-shot examples, one set of five per language.
EXAMPLES = {
    "en": [
        ("The committee will examine the report in detail.", "examine", "check"),
        ("She showed great persistence during her recovery.", "persistence", "effort"),
        ("The directions on the box were unclear.", "unclear", "confusing"),
        ("The storm caused considerable damage to the roof.", "considerable", "large"),
        ("He wanted to purchase a new bicycle.", "purchase", "buy"),
    ],
    "es": [
        ("El comité va a examinar el informe con cuidado.", "examinar", "revisar"),
        ("La película fue extraordinariamente larga.", "extraordinariamente", "muy"),
        ("Debemos adquirir más libros para la escuela.", "adquirir", "comprar"),
        ("El camino era angosto y peligroso.", "angosto", "estrecho"),
        ("Su respuesta fue ambigua.", "ambigua", "confusa"),
    ],
    "ca": [
        ("El comitè ha d'examinar l'informe amb atenció.", "examinar", "revisar"),
        ("Van adquirir una casa prop del mar.", "adquirir", "comprar"),
        ("La sortida del sol va ser esplèndida.", "esplèndida", "bonica"),
        ("El camí era estret i perillós.", "perillós", "arriscat"),
        ("La seva resposta va ser ambigua.", "ambigua", "confusa"),
    ],
    "de": [
        ("Der Ausschuss wird den Bericht sorgfältig prüfen.", "sorgfältig", "genau"),
        ("Wir müssen neue Bücher erwerben.", "erwerben", "kaufen"),
        ("Die Anweisungen waren mehrdeutig.", "mehrdeutig", "unklar"),
        ("Der Sturm verursachte erhebliche Schäden.", "erhebliche", "große"),
        ("Sie zeigte bemerkenswerte Ausdauer.", "bemerkenswerte", "große"),
    ],
    "ja": [
        ("委員会は報告書を詳細に検討する。", "検討", "調べる"),
        ("彼は新しい自転車を購入した。", "購入", "買う"),
        ("説明が曖昧だった。", "曖昧", "はっきりしない"),
        ("嵐は屋根に甚大な被害を与えた。", "甚大", "大きな"),
        ("彼女は驚異的な粘り強さを示した。", "驚異的", "すごい"),
    ],
}

TOKEN = re.compile(r"\w+(?:[-']\w+)*|[^\w\s]")


def annotate(doc_id, text):
    tokens = []
    # Offsets are in Unicode scalar values, like Python string indices.
    for m in TOKEN.finditer(text):
        surface = m.group()
        is_word = surface[0].isalnum()
        if not is_word:
            pos = "PUNCT"
        elif surface in PROPER:
            pos = "PROPN"
        elif surface.isdigit():
            pos = "NUM"
        else:
            pos = "WORD"
        tokens.append(
            {"surface": surface, "start": m.start(), "end": m.end(), "pos": pos, "is_word": is_word}
        )
    return {"doc_id": doc_id, "text": text, "tokens": tokens}


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    words = set()
    with open(OUT / "corpus_en.jsonl", "w", encoding="utf-8") as f:
        for doc_id, sentences in DOCS.items():
            for s in sentences:
                rec = annotate(doc_id, s)
                f.write(json.dumps(rec, ensure_ascii=False, separators=(",", ":")) + "\n")
                words.update(t["surface"].lower() for t in rec["tokens"] if t["is_word"])
    with open(OUT / "freq_en.tsv", "w", encoding="utf-8") as f:
        f.write("# word\tzipf (wordfreq, English)\n")
        for w in sorted(words):
            z = zipf_frequency(w, "en")
            if z > 0:
                f.write(f"{w}\t{z:.2f}\n")

    n = 0
    with open(OUT / "dataset_en.jsonl", "w", encoding="utf-8") as f:
        for context, targets in DATASET:
            for target, gold in targets:
                n += 1
                start = re.search(rf"\b{re.escape(target)}\b", context).start()
                rec = {
                    "id": f"en-{n:04}",
                    "language": "en",
                    "context": context,
                    "target": target,
                    "target_span": {"start": start, "end": start + len(target)},
                    "gold": gold,
                }
                f.write(json.dumps(rec, ensure_ascii=False, separators=(",", ":")) + "\n")

    with open(OUT / "fewshot.jsonl", "w", encoding="utf-8") as f:
        for lang, rows in EXAMPLES.items():
            for context, target, alternative in rows:
                assert target in context, (lang, target)
                rec = {"language": lang, "context": context, "target": target, "alternative": alternative}
                f.write(json.dumps(rec, ensure_ascii=False, separators=(",", ":")) + "\n")


if __name__ == "__main__":
    main()
