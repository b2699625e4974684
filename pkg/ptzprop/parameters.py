""" Dotted 'section.key' parameters: grouping, parsing and formatting. """
# License: BSD (3-clause)

SEPARATOR = '.'


def unravel_group_params(flat_params):
    """ Take a dict('section.key' -> value) and return a
    dict(section -> {key -> value}).
    """
    grouped = {}
    for name, value in flat_params.items():
        if name.count(SEPARATOR) != 1:
            raise KeyError(f"parameter {name!r} should read 'section.key'")
        section, key = name.split(SEPARATOR)
        grouped.setdefault(section, {})[key] = value
    return grouped


def ravel_group_params(grouped_params):
    """ Inverse of unravel_group_params. """
    return {f'{section}{SEPARATOR}{key}': value
            for section, params in grouped_params.items()
            for key, value in params.items()}


def parse_parameters(text):
    """ Parse 'section.key = value' lines into a dict('section.key' -> str).

    Blank lines and '#' comments are skipped, later keys override earlier
    ones. Raise a ValueError naming the line on malformed entries.
    """
    params = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ValueError(f"line {line_no}: expected 'section.key = "
                             f"value', got {line!r}")
        name, value = (s.strip() for s in line.split('=', 1))
        if not name or not value:
            raise ValueError(f"line {line_no}: empty key or value")
        params[name] = value
    return params


def format_parameters(flat_params):
    """ Return the 'section.key = value' text of a dict, sorted by key. """
    lines = []
    for name in sorted(flat_params):
        value = flat_params[name]
        if isinstance(value, bool):
            value = str(value).lower()
        elif isinstance(value, (tuple, list)):
            value = ' '.join(repr(v) for v in value)
        lines.append(f'{name} = {value}')
    return '\n'.join(lines) + '\n'
