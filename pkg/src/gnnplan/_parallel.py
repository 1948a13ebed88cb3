from concurrent.futures import ProcessPoolExecutor


def ordered_map(fn, items, jobs=1):
    """``list(map(fn, items))``, fanned out over ``jobs`` processes; result
    order always follows ``items``."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))
