def f(n, A):
    import heapq
    B = sorted(A, reverse=True)
    val = 0
    h = []
    rm = 0
    max_sz = 0
    for x in B:
        val += x
        heapq.heappush(h, x)
        if len(h) > max_sz:
            max_sz = len(h)
        if val < 0:
            y = heapq.heappop(h)
            val -= y
            rm += 1
    return len(h), {'rm': rm, 'max_sz': max_sz}
