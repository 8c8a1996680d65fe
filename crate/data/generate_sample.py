"""Regenerate the synthetic sample corpus (activities.csv).

The rows imitate life-cycle-inventory activity names; they are synthetic and
deterministic (fixed seed), not drawn from any licensed database.
"""
import csv
import random
from pathlib import Path

HERE = Path(__file__).parent

# class code -> (products, processes)
CLASSES = {
    "0111": (["wheat grain", "barley grain", "maize grain", "soybean", "rape seed", "pea"],
             ["{p} production", "{p} production, organic", "{p} cultivation, irrigated"]),
    "0112": (["rice", "rice, paddy", "basmati rice"],
             ["{p} production", "{p} production, non-basmati", "cultivation of {p}, upland"]),
    "0141": (["cattle", "dairy cow", "beef cattle", "buffalo"],
             ["{p} for slaughtering, live weight", "raising of {p}", "{p} husbandry, grazing"]),
    "0145": (["swine", "pig", "piglet", "sow"],
             ["{p} for slaughtering, live weight", "fattening of {p}", "{p} housing, raising"]),
    "0220": (["roundwood", "softwood logs", "hardwood logs", "pulpwood"],
             ["{p} harvesting, forestry", "felling of {p}", "{p} logging, skidding"]),
    "0510": (["hard coal", "anthracite", "bituminous coal"],
             ["{p} mine operation", "{p} mining, underground", "extraction of {p}, open pit"]),
    "1010": (["beef carcass", "pork", "poultry meat", "sausage"],
             ["{p} slaughterhouse operation", "processing of {p}", "{p} cutting and chilling"]),
    "1701": (["kraft pulp", "newsprint", "paperboard", "containerboard"],
             ["{p} production, bleached", "{p} mill operation", "manufacture of {p}"]),
    "2011": (["sulfuric acid", "chlorine", "sodium hydroxide", "ethylene"],
             ["{p} production", "{p} production, chlor-alkali electrolysis", "synthesis of {p}"]),
    "2012": (["ammonia", "urea", "ammonium nitrate", "nitrogen fertiliser"],
             ["{p} production", "{p} synthesis, steam reforming", "{p} granulation plant"]),
    "2394": (["cement", "clinker", "quicklime", "gypsum plaster"],
             ["{p} production", "{p} production, Portland", "{p} kiln operation"]),
    "2410": (["pig iron", "steel", "hot rolled coil", "steel billet"],
             ["{p} production, blast furnace", "{p} production, converter", "{p} rolling mill"]),
    "2420": (["primary aluminium", "copper cathode", "zinc", "nickel"],
             ["{p} production, smelting", "{p} refining, electrolytic", "{p} production, primary"]),
    "3510": (["electricity", "electricity, high voltage", "electricity, wind", "electricity, hydro"],
             ["{p} production", "{p} generation, power plant", "transmission of {p}"]),
    "3821": (["municipal solid waste", "inert waste", "sewage sludge", "biowaste"],
             ["treatment of {p}, sanitary landfill", "treatment of {p}, incineration", "{p} composting"]),
    "3830": (["scrap steel", "waste paper", "glass cullet", "plastic waste"],
             ["sorting of {p}", "recycling of {p}", "{p} recovery, materials"]),
    "4100": (["residential building", "office building", "warehouse", "school building"],
             ["construction of {p}", "{p} erection", "{p} construction, concrete frame"]),
    "4311": (["buildings", "bridge", "chimney", "industrial plant"],
             ["demolition of {p}", "{p} demolition, wrecking", "dismantling of {p}"]),
    "4312": (["building site", "land", "terrain"],
             ["{p} clearing", "excavation and {p} preparation", "earth moving, {p} levelling"]),
    "4923": (["freight", "goods", "container"],
             ["transport, {p}, lorry 16-32 metric ton", "{p} road haulage", "{p} transport, truck"]),
}

def main() -> None:
    rng = random.Random(20241215)
    rows = []
    for code, (products, processes) in CLASSES.items():
        names = sorted({proc.format(p=p) for p in products for proc in processes})
        rng.shuffle(names)
        regions = ["", ", GLO", ", RER", ", RoW", ", CH", ", US"]
        for name in names[:10]:
            rows.append((name + rng.choice(regions), code))
    rng.shuffle(rows)
    with open(HERE / "activities.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["activity_name", "isic_class"])
        w.writerows(rows)

if __name__ == "__main__":
    main()
