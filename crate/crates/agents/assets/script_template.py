def run({params}):
    """{task}

    Inputs:
{inputs}
    Returns:
{outputs}
    """
{body}
