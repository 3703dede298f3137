"""Published average image tokens per document on the KIE benchmark datasets.

The region-based tokenizer's counts are measured averages (they depend on how
many regions the detector finds per page), so they are consumed as data
rather than recomputed.
"""

IN_DOMAIN = ("Deepform", "DocILE", "KLC", "PWC", "SROIE", "Wildreceipt")
OUT_OF_DOMAIN = ("FUNSD", "CORD")
DATASETS = IN_DOMAIN + OUT_OF_DOMAIN

GROUPS = {"Avg (ID)": IN_DOMAIN, "Avg (OOD)": OUT_OF_DOMAIN}

REGION_TOKENIZER_TOKENS = {
    "Deepform": 808, "DocILE": 488, "KLC": 219, "PWC": 1027,
    "SROIE": 377, "Wildreceipt": 282, "FUNSD": 488, "CORD": 192,
}

DOCOWL15_TOKENS = {
    "Deepform": 1799, "DocILE": 1802, "KLC": 1799, "PWC": 1799,
    "SROIE": 1767, "Wildreceipt": 1508, "FUNSD": 1799, "CORD": 1868,
}

#: reduction ratios as printed alongside the token counts, one decimal
PUBLISHED_RATIOS = {
    "Deepform": 2.2, "DocILE": 3.7, "KLC": 8.2, "PWC": 1.8, "SROIE": 4.7,
    "Wildreceipt": 5.3, "Avg (ID)": 3.3, "FUNSD": 3.7, "CORD": 9.7,
    "Avg (OOD)": 5.4, "Overall": 3.6,
}

#: token count of the fixed-grid baseline the budget band is centred on
FIXED_GRID_TOKENS = 576

#: corpus-average region counts per page used to pick pooling sizes
CORPUS_AVG_TEXT_REGIONS = 293.37
CORPUS_AVG_VISION_REGIONS = 0.71
